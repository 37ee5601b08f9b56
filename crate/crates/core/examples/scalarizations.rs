//! Every scalarization evaluated at one objective vector, for a few
//! preferences.
//!
//!     cargo run --example scalarizations

use pfl::prefs::PreferenceVector;
use pfl::scalarize::{scalarize_values, ScalarKind, ScalarizationSpec};

fn main() -> pfl::Result<()> {
    let objectives = [0.3, 0.6];
    let prefs = [[0.2, 0.8], [0.5, 0.5], [0.8, 0.2]];
    print!("{:>8}", "kind");
    for r in &prefs {
        print!("  r=({:.1},{:.1})", r[0], r[1]);
    }
    println!();
    for kind in ScalarKind::ALL {
        if kind == ScalarKind::Hvi {
            // hvi scores a batch of points, not one
            continue;
        }
        let spec = ScalarizationSpec::new(kind, 2);
        print!("{:>8}", kind.name());
        for r in &prefs {
            let r = PreferenceVector::new(r.to_vec())?;
            print!("  {:>11.5}", scalarize_values(&spec, &objectives, &r)?);
        }
        println!();
    }
    Ok(())
}
