use spherewidth::report::run_default_audit;
use std::time::Instant;

fn main() {
    let t = Instant::now();
    match run_default_audit(7, 1) {
        Ok(r) => {
            for c in &r.checks {
                if !c.pass {
                    println!("FAIL {} (computed {:.6}, bound {:.6})", c.name, c.computed, c.bound);
                }
            }
            println!("passed = {} ({} checks)", r.passed, r.checks.len());
        }
        Err(e) => println!("error: {e}"),
    }
    println!("elapsed {:?}", t.elapsed());
}
