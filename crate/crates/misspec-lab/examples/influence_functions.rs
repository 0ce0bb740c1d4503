//! Pointwise influence functions of the three pipelines and the projection
//! identities connecting them.
//!
//! Run with: cargo run --release --example influence_functions

use misspec_lab::asymptotics::{Asymptotics, Method};
use misspec_lab::model::GaussianScaledMeanFamily;
use misspec_lab::problems::NewsvendorProblem;

fn main() -> misspec_lab::Result<()> {
    let problem = NewsvendorProblem::uniform(2, 5.0, 1.0)?;
    let family = GaussianScaledMeanFamily::new(2);
    let asy = Asymptotics::new(problem, family, 3.0)?;

    println!("V     = {:.5}", asy.sens.v);
    println!("Sigma = {:.5}", asy.sens.sigma);
    println!("P     = {:.5} (idempotent oblique projection)", asy.projection());

    for z in [[3.0, 6.0], [2.0, 5.5], [4.1, 7.3]] {
        println!("z = {z:?}");
        for m in Method::ALL {
            let inf = asy.influence(m, &z);
            println!("  IF^{:<4} = [{:+.5}, {:+.5}]", m.name(), inf[0], inf[1]);
        }
    }

    // The IEO influence is the V-self-adjoint projection of the SAA one, so
    // its V-norm can never exceed SAA's.
    let z = [2.7, 6.4];
    let saa = asy.influence(Method::Saa, &z);
    let ieo = asy.influence(Method::Ieo, &z);
    let v = &asy.sens.v;
    println!(
        "V-norms at {z:?}: SAA {:.5} >= IEO {:.5}",
        (saa.transpose() * v * &saa)[(0, 0)],
        (ieo.transpose() * v * &ieo)[(0, 0)],
    );
    Ok(())
}
