// scratch: measure blob-functional margins for generator geometry tuning
use bngnn::netbuild::{build_adjacency, normalize};
use bngnn::numerics::matrix::Matrix;

fn main() {
    // replicate family_template geometry pieces manually via the public API
    for n in [12usize, 16, 20, 30] {
        for fam in 0..2 {
            let spec = bngnn::experiments::synthetic::SyntheticSpec::new(20, n, 0.5, 0.0, 3);
            match bngnn::experiments::synthetic::debug_functionals(&spec, fam) {
                Ok((u1, u2, u3, m2, m1)) => {
                    println!("n={n} fam={fam} U1={u1:.3?}");
                    println!("        U2={u2:.3?}");
                    println!("        U3={u3:.3?}");
                    println!("        two-hop margin={m2:.4} one-hop margin={m1:.4}");
                }
                Err(e) => println!("n={n} fam={fam} ERR {e}"),
            }
        }
    }
    let _ = (build_adjacency, normalize, Matrix::zeros(1, 1));
}
