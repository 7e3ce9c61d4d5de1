use super::BracketTable;

/// Highest step for which the truncated series below is exact.
pub const MAX_SUPPORTED_STEP: usize = 4;

pub(crate) struct Scratch {
    ab: Vec<f64>,
    aab: Vec<f64>,
    bab: Vec<f64>,
    baab: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(dim: usize) -> Self {
        Scratch {
            ab: vec![0.0; dim],
            aab: vec![0.0; dim],
            bab: vec![0.0; dim],
            baab: vec![0.0; dim],
        }
    }
}

/// `out = log(exp(a) exp(b))`, Dynkin terms through bracket order `step`:
///
/// `a + b + ½[a,b] + (1/12)([a,[a,b]] − [b,[a,b]]) − (1/24)[b,[a,[a,b]]]`.
///
/// Brackets of order > step vanish under the filtration, so dropping them is
/// exact. `out` must not alias `a` or `b`.
#[inline]
pub(crate) fn bch_into(
    table: &BracketTable,
    step: usize,
    a: &[f64],
    b: &[f64],
    out: &mut [f64],
    s: &mut Scratch,
) {
    for k in 0..out.len() {
        out[k] = a[k] + b[k];
    }
    if step < 2 || table.is_zero() {
        return;
    }
    table.bracket_into(a, b, &mut s.ab);
    for k in 0..out.len() {
        out[k] += 0.5 * s.ab[k];
    }
    if step < 3 {
        return;
    }
    table.bracket_into(a, &s.ab, &mut s.aab);
    table.bracket_into(b, &s.ab, &mut s.bab);
    for k in 0..out.len() {
        out[k] += (s.aab[k] - s.bab[k]) / 12.0;
    }
    if step < 4 {
        return;
    }
    table.bracket_into(b, &s.aab, &mut s.baab);
    for k in 0..out.len() {
        out[k] -= s.baab[k] / 24.0;
    }
}
