use super::{ConstraintBlock, MultistageModel};
use crate::ambiguity::AmbiguityKind;
use crate::lp::Relation;
use crate::{Error, Result};

/// Where each original state column of each stage lives after expansion:
/// `columns[t][k] = (first bit column, bit count)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedLayout {
    pub columns: Vec<Vec<(usize, usize)>>,
}

fn bits_for(u: u64) -> usize {
    (64 - u.leading_zeros()) as usize
}

/// Replaces integer state columns by binary digits.
///
/// `ranges[t][k]` is `Some(U)` for a column taking values in `{0, …, U}` and
/// `None` for a column without a finite range. Columns not listed in
/// `integer[t]` stay binary and are copied as one bit.
pub fn binary_expand(m: &MultistageModel, integer: &[Vec<usize>], ranges: &[Vec<Option<u64>>]) -> Result<(MultistageModel, ExpandedLayout)> {
    if integer.len() != m.horizon || ranges.len() != m.horizon {
        return Err(Error::DimensionMismatch(format!("expected {} stage entries", m.horizon)));
    }
    if m.ambiguity.kind == AmbiguityKind::WassersteinDdContinuous {
        return Err(Error::invalid("ambiguity.kind", "expansion would change the radius slope dimension"));
    }
    let mut out = m.clone();
    let mut layout = ExpandedLayout { columns: Vec::with_capacity(m.horizon) };
    // weights[t][k]: list of (new column, weight) representing old column k.
    let mut weights: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(m.horizon);
    let mut caps: Vec<Vec<Option<(Vec<(usize, f64)>, u64)>>> = Vec::with_capacity(m.horizon);
    for t in 0..m.horizon {
        let st = &m.stages[t];
        if ranges[t].len() != st.d_x {
            return Err(Error::DimensionMismatch(format!("stage {t}: {} ranges for {} columns", ranges[t].len(), st.d_x)));
        }
        let mut next = 0;
        let mut cols = Vec::with_capacity(st.d_x);
        let mut w = Vec::with_capacity(st.d_x);
        let mut cap = Vec::with_capacity(st.d_x);
        for k in 0..st.d_x {
            if integer[t].contains(&k) {
                let u = ranges[t][k].ok_or(Error::UnboundedInteger(k))?;
                let n = bits_for(u);
                let digits: Vec<(usize, f64)> = (0..n).map(|b| (next + b, (1u64 << b) as f64)).collect();
                cap.push(if n > 0 && (1u64 << n) - 1 > u { Some((digits.clone(), u)) } else { None });
                cols.push((next, n));
                w.push(digits);
                next += n;
            } else {
                cols.push((next, 1));
                w.push(vec![(next, 1.0)]);
                cap.push(None);
                next += 1;
            }
        }
        layout.columns.push(cols);
        weights.push(w);
        caps.push(cap);
    }
    let expand_row = |row: &[f64], w: &[Vec<(usize, f64)>], width: usize| -> Vec<f64> {
        let mut v = vec![0.0; width];
        for (k, &a) in row.iter().enumerate() {
            for &(j, s) in &w[k] {
                v[j] += a * s;
            }
        }
        v
    };
    let widths: Vec<usize> = layout.columns.iter().map(|c| c.last().map_or(0, |&(s, n)| s + n)).collect();
    for t in 0..m.horizon {
        let d_x = widths[t];
        let d_prev = if t == 0 { m.x0.len() } else { widths[t - 1] };
        let st = &mut out.stages[t];
        st.d_x = d_x;
        st.d_x_prev = d_prev;
        let rewrite = |b: &ConstraintBlock| -> ConstraintBlock {
            let mut nb = ConstraintBlock::empty();
            for r in 0..b.len() {
                let a = expand_row(&b.a[r], &weights[t], d_x);
                let c = if t == 0 { b.c[r].clone() } else { expand_row(&b.c[r], &weights[t - 1], d_prev) };
                nb.push(a, b.b[r].clone(), c, b.relations[r], b.rhs[r]);
            }
            nb
        };
        for sc in st.scenarios.iter_mut() {
            sc.cost_x = expand_row(&sc.cost_x, &weights[t], d_x);
            sc.rows = rewrite(&sc.rows);
            for cap in caps[t].iter().flatten() {
                let mut a = vec![0.0; d_x];
                for &(j, s) in &cap.0 {
                    a[j] = s;
                }
                sc.rows.push(a, vec![0.0; st.d_y], vec![0.0; d_prev], Relation::Le, cap.1 as f64);
            }
            sc.disjuncts = sc.disjuncts.iter().map(&rewrite).collect();
        }
    }
    out.validate()?;
    Ok((out, layout))
}

/// Integer values of stage `t`'s original columns from an expanded binary state.
pub fn decode_expanded(layout: &ExpandedLayout, t: usize, bits: &[f64]) -> Vec<f64> {
    layout.columns[t]
        .iter()
        .map(|&(s, n)| (0..n).map(|b| bits[s + b].round() * (1u64 << b) as f64).sum())
        .collect()
}
