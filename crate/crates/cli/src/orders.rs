//! Order schedules: `6,7,8`, `6..14` (inclusive) and `10..100:10`, freely
//! combined with commas.

use crate::CliError;

pub fn parse_orders(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = |why: &str| CliError::Config(format!("order list `{text}`: {why}"));
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim) {
        if item.is_empty() {
            return Err(bad("empty item"));
        }
        if let Some((from, rest)) = item.split_once("..") {
            let (to, step) = match rest.split_once(':') {
                Some((to, step)) => (to, step),
                None => (rest, "1"),
            };
            let from: usize = from.trim().parse().map_err(|_| bad("bad range start"))?;
            let to: usize = to.trim().parse().map_err(|_| bad("bad range end"))?;
            let step: usize = step.trim().parse().map_err(|_| bad("bad range step"))?;
            if step == 0 || to < from {
                return Err(bad("empty range"));
            }
            out.extend((from..=to).step_by(step));
        } else {
            out.push(item.parse().map_err(|_| bad("not an integer"))?);
        }
    }
    if out.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad("orders must be strictly increasing"));
    }
    Ok(out)
}
