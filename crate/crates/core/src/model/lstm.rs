use rand::Rng;

use crate::numerics::{xavier_uniform, NumericsError, ParamId, ParamStore, Tape, Tensor, Var};

/// One LSTM direction. Gate blocks are laid out `[input | forget | cell | output]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn register(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        LstmCell {
            w_x: store.add(format!("{name}.w_x"), xavier_uniform(input, 4 * hidden, rng)),
            w_h: store.add(format!("{name}.w_h"), xavier_uniform(hidden, 4 * hidden, rng)),
            b: store.add(format!("{name}.b"), Tensor::zeros(1, 4 * hidden)),
            hidden,
        }
    }

    /// Hidden states for every step of `input` visited in `order`, returned
    /// in visiting order.
    pub fn run(
        &self,
        tape: &mut Tape<'_>,
        input: Var,
        order: impl Iterator<Item = usize>,
    ) -> Result<Vec<Var>, NumericsError> {
        let h = self.hidden;
        let (w_x, w_h, b) = (tape.param(self.w_x), tape.param(self.w_h), tape.param(self.b));
        let proj = tape.matmul(input, w_x)?;
        let proj = tape.add(proj, b)?;
        let mut states = Vec::new();
        let mut prev: Option<(Var, Var)> = None;
        for t in order {
            let mut gates = tape.select_rows(proj, &[t])?;
            if let Some((h_prev, _)) = prev {
                let rec = tape.matmul(h_prev, w_h)?;
                gates = tape.add(gates, rec)?;
            }
            let i = tape.slice_cols(gates, 0, h)?;
            let f = tape.slice_cols(gates, h, h)?;
            let g = tape.slice_cols(gates, 2 * h, h)?;
            let o = tape.slice_cols(gates, 3 * h, h)?;
            let i = tape.sigmoid(i);
            let g = tape.tanh(g);
            let o = tape.sigmoid(o);
            let mut c = tape.mul(i, g)?;
            if let Some((_, c_prev)) = prev {
                let f = tape.sigmoid(f);
                let keep = tape.mul(f, c_prev)?;
                c = tape.add(c, keep)?;
            }
            let tc = tape.tanh(c);
            let h_t = tape.mul(o, tc)?;
            states.push(h_t);
            prev = Some((h_t, c));
        }
        Ok(states)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

impl BiLstm {
    pub fn register(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        BiLstm {
            fwd: LstmCell::register(store, &format!("{name}.fwd"), input, hidden, rng),
            bwd: LstmCell::register(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    /// `T x 2h` matrix of per-position `[forward ‖ backward]` states.
    pub fn sequence(&self, tape: &mut Tape<'_>, input: Var) -> Result<Var, NumericsError> {
        let n = tape.value(input).rows();
        let fwd = self.fwd.run(tape, input, 0..n)?;
        let mut bwd = self.bwd.run(tape, input, (0..n).rev())?;
        bwd.reverse();
        let f = tape.concat_rows(&fwd)?;
        let b = tape.concat_rows(&bwd)?;
        tape.concat_cols(&[f, b])
    }

    /// `1 x 2h` row: last forward state and last backward state (the one at
    /// position 0).
    pub fn final_state(&self, tape: &mut Tape<'_>, input: Var) -> Result<Var, NumericsError> {
        let n = tape.value(input).rows();
        let fwd = self.fwd.run(tape, input, 0..n)?;
        let bwd = self.bwd.run(tape, input, (0..n).rev())?;
        tape.concat_cols(&[*fwd.last().unwrap(), *bwd.last().unwrap()])
    }
}
