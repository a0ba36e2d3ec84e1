//! Temporary probe for the safety-bias scene.

use proxcol::harness::bias_experiment;
use proxcol::Result;

fn main() -> Result<()> {
    let mut qualified = 0usize;
    let mut ordered = 0usize;
    let mut seed = 0u64;
    while qualified < 20 && seed < 60 {
        let s = seed;
        seed += 1;
        let out = match bias_experiment(s) {
            Ok(v) => v,
            Err(e) => {
                println!("seed {s}: skipped ({e})");
                continue;
            }
        };
        if !out.qualified {
            println!("seed {s}: disqualified");
            continue;
        }
        qualified += 1;
        let ord = out.important_biased[0] > out.important_biased[1];
        let rev = out.ordinary_biased[1] > out.ordinary_biased[0];
        ordered += usize::from(ord);
        println!(
            "seed {s}: ordered {ord} m {:.2} imp [{:+.3},{:+.3}] | rev {rev} ord [{:+.3},{:+.3}]",
            out.magnitude,
            out.important_biased[0], out.important_biased[1],
            out.ordinary_biased[0], out.ordinary_biased[1]
        );
    }
    println!("{qualified} qualified, {ordered}/{qualified} ordered");
    Ok(())
}
