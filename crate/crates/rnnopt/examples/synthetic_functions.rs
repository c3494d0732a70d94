//! Sample synthetic training objectives and validate their estimated
//! optima against a grid-search oracle.
//!
//! Each objective is a signed mixture of diagonal Gaussians; its optimum is
//! estimated as the best value over the component means. The grid search
//! samples the domain densely and reports how far that estimate is from
//! the best value it can find.
//!
//!     cargo run --release --example synthetic_functions

use rnnopt::harness::manifest::{sample_suite, write_manifest};
use rnnopt::harness::yopt_study;
use rnnopt::synthfn::GmmProfile;

fn main() {
    let profile = GmmProfile::d2();
    let suite = sample_suite(&profile, 5, 13);
    println!("five sampled objectives (d = {}):", profile.d);
    for (k, f) in suite.iter().enumerate() {
        println!(
            "  {k}: {} components, weights [{}], estimated optimum {:.4}",
            f.components(),
            f.weights.iter().map(|w| format!("{w:+.3}")).collect::<Vec<_>>().join(", "),
            f.y_opt_est,
        );
    }

    let path = std::env::temp_dir().join("rnnopt_suite.manifest");
    std::fs::write(&path, write_manifest(&suite, 13)).expect("write manifest");
    println!("manifest written to {}\n", path.display());

    let (functions, points) = (50, 200_000);
    println!("validating optimum estimates on {functions} fresh functions ({points} grid points each)...");
    let (mean, sd) = yopt_study(&profile, functions, points, 13);
    println!("absolute estimation error: mean {mean:.4}, sd {sd:.4}");
}
