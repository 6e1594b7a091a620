/// Earliest time (relative to `t[0]`) after which `|err| <= band` holds for
/// every remaining sample, provided the remaining record spans at least
/// `hold_s`. `None` if no such time exists.
pub fn convergence_time_series(t: &[f64], err: &[f64], band: f64, hold_s: f64) -> Option<f64> {
    let n = t.len().min(err.len());
    if n == 0 || !(band > 0.0) {
        return None;
    }
    let mut j = n;
    while j > 0 && err[j - 1].abs() <= band {
        j -= 1;
    }
    if j == n || t[n - 1] - t[j] < hold_s {
        return None;
    }
    Some(t[j] - t[0])
}
