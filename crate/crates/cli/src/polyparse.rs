//! Drift polynomials written as sums of products, e.g.
//! `"x2 - x1^2*x2 - x1"` or `"1.5*x1*x2 - 2e-3"`. Variables are `x1`…`xN`.

use stochctl_core::Polynomial;

/// Splits at top-level `+`/`-`, keeping the sign with the term. A sign
/// directly after the `e` of a number's exponent is not a split point.
fn terms(s: &str) -> Vec<(f64, String)> {
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut cur = String::new();
    let mut prev: Option<char> = None;
    for c in s.chars().filter(|c| !c.is_whitespace()) {
        let exponent_sign = matches!(prev, Some('e' | 'E'))
            && cur.len() >= 2
            && cur[..cur.len() - 1].ends_with(|d: char| d.is_ascii_digit() || d == '.');
        if (c == '+' || c == '-') && !exponent_sign {
            if !cur.is_empty() || prev.is_some_and(|p| p == '+' || p == '-') {
                out.push((sign, std::mem::take(&mut cur)));
            }
            sign = if c == '-' { -1.0 } else { 1.0 };
        } else {
            cur.push(c);
        }
        prev = Some(c);
    }
    out.push((sign, cur));
    out
}

pub fn parse_polynomial(s: &str, nvars: usize) -> Result<Polynomial, String> {
    if s.trim().is_empty() {
        return Err("empty polynomial".into());
    }
    let mut p = Polynomial::zero(nvars);
    for (sign, term) in terms(s) {
        if term.is_empty() {
            return Err(format!("missing term in {s:?}"));
        }
        let mut coeff = sign;
        let mut exps = vec![0u32; nvars];
        for factor in term.split('*') {
            if factor.is_empty() {
                return Err(format!("empty factor in term {term:?}"));
            }
            if let Some(rest) = factor.strip_prefix('x') {
                let (var, power) = match rest.split_once('^') {
                    Some((v, e)) => (v, e.parse::<u32>().map_err(|_| format!("bad exponent in {factor:?}"))?),
                    None => (rest, 1),
                };
                let var: usize = var.parse().map_err(|_| format!("bad variable {factor:?}"))?;
                if var == 0 || var > nvars {
                    return Err(format!("variable x{var} out of range x1..x{nvars}"));
                }
                exps[var - 1] += power;
            } else {
                let v: f64 = factor.parse().map_err(|_| format!("bad number {factor:?}"))?;
                if !v.is_finite() {
                    return Err(format!("non-finite coefficient {factor:?}"));
                }
                coeff *= v;
            }
        }
        p.add_term(exps, coeff);
    }
    Ok(p)
}
