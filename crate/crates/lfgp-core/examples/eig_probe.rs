use lfgp_core::baselines::{hmm_elbow, EmissionKind, HmmFitOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let opts = HmmFitOptions { max_iters: 200, tol: 1e-6, restarts: 3, diag_load: 1e-6 };
    for run in 0..10u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(100 + run);
        let means = [-6.0, 0.0, 6.0];
        let t_len = 600;
        let mut seq = DMatrix::zeros(t_len, 1);
        let mut s = 0usize;
        for t in 0..t_len {
            if t > 0 && rng.gen::<f64>() > 0.93 {
                s = (s + rng.gen_range(1..3)) % 3;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            seq[(t, 0)] = means[s] + 0.7 * z;
        }
        match hmm_elbow(&[seq], &[1,2,3,4,5,6], EmissionKind::MeanCov, &opts, &mut rng) {
            Ok(aic) => {
                let strs: Vec<String> = aic.iter().map(|(s,v)| format!("S{s}:{v:.1}")).collect();
                let best = aic.iter().min_by(|a,b| a.1.partial_cmp(&b.1).unwrap()).unwrap().0;
                println!("run {run}: best={best}  {}", strs.join(" "));
            }
            Err(e) => println!("run {run}: ERR {e}"),
        }
    }
}
