/// One patient's calendar history.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Patient {
    pub entry: f64,
    pub experimental: bool,
    /// Calendar time of the event; infinite when dropout comes first.
    pub event: f64,
    /// Calendar time of leaving follow-up by event or dropout.
    pub exit: f64,
}

/// Log-rank statistic oriented so that positive values favour the
/// experimental arm: `z = −U/√V` with `U = Σ (O_E − E_E)`.
///
/// Uses the patients entered before `cutoff`, follow-up censored there.
/// Returns the z statistic and the number of events.
pub(crate) fn logrank_z(patients: &[Patient], cutoff: f64, scratch: &mut Vec<(f64, bool, bool)>) -> (f64, u32) {
    scratch.clear();
    scratch.extend(patients.iter().filter(|p| p.entry < cutoff).map(|p| {
        let end = p.exit.min(cutoff);
        (end - p.entry, p.event <= cutoff, p.experimental)
    }));
    scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut at_risk_e = scratch.iter().filter(|r| r.2).count() as f64;
    let mut at_risk_c = scratch.len() as f64 - at_risk_e;
    let (mut u, mut v) = (0.0, 0.0);
    let mut events = 0u32;
    let mut i = 0;
    while i < scratch.len() {
        let t = scratch[i].0;
        let (mut d_e, mut d_c, mut n_e_out, mut n_c_out) = (0.0, 0.0, 0.0, 0.0);
        while i < scratch.len() && scratch[i].0 == t {
            let (_, event, exp) = scratch[i];
            match (event, exp) {
                (true, true) => d_e += 1.0,
                (true, false) => d_c += 1.0,
                _ => {}
            }
            if exp {
                n_e_out += 1.0;
            } else {
                n_c_out += 1.0;
            }
            i += 1;
        }
        let d = d_e + d_c;
        if d > 0.0 {
            let n = at_risk_e + at_risk_c;
            u += d_e - d * at_risk_e / n;
            if n > 1.0 {
                v += d * (at_risk_e / n) * (at_risk_c / n) * (n - d) / (n - 1.0);
            }
            events += d as u32;
        }
        at_risk_e -= n_e_out;
        at_risk_c -= n_c_out;
    }
    let z = if v > 0.0 { -u / v.sqrt() } else { 0.0 };
    (z, events)
}
