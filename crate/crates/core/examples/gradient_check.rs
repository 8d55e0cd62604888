//! Central-difference check of every analytic gradient on a small random
//! instance. Pass a loss name to check only that one.

use metricvo::trainer::{gradient_check, GradCheckInstance, GradCheckTolerance, LossSelector};

fn main() -> metricvo::Result<()> {
    let only = std::env::args().nth(1);
    let instance = GradCheckInstance::synthetic(24, 18, 3, 11)?;
    let tol = GradCheckTolerance::default();
    for sel in LossSelector::ALL {
        if only.as_deref().is_some_and(|o| o != sel.name()) {
            continue;
        }
        let r = gradient_check(sel, &instance, &tol)?;
        println!(
            "{:<14} {} {:>5}/{:<5} max rel {:.2e}  median rel {:.2e}",
            r.loss,
            if r.pass { "ok  " } else { "FAIL" },
            r.passed,
            r.checked,
            r.max_relative_error,
            r.median_relative_error
        );
        for o in r.offending.iter().take(3) {
            println!("    {}: analytic {:.6e} numeric {:.6e}", o.coordinate, o.analytic, o.numeric);
        }
    }
    Ok(())
}
