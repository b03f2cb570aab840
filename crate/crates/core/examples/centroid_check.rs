// quick check of pool centroid accuracy at current constants
fn main() {
    for seed in [7u64, 42, 99] {
        let synth = pdfl_core::data::generate_synthetic::<f64>(9, 20, 2, 400, seed).unwrap();
        let d = &synth.dataset;
        let k = d.n_classes();
        let dim = d.n_features();
        let mut centroids = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in d.labels().iter().enumerate() {
            counts[l] += 1;
            for (a, &x) in centroids[l].iter_mut().zip(d.features().row(i)) { *a += x; }
        }
        for (c, n) in centroids.iter_mut().zip(&counts) {
            for v in c.iter_mut() { *v /= *n as f64; }
        }
        let mut correct = 0;
        for (i, &l) in d.labels().iter().enumerate() {
            let row = d.features().row(i);
            let best = (0..k).min_by(|&a, &b| {
                let da: f64 = row.iter().zip(&centroids[a]).map(|(x, c)| (x - c) * (x - c)).sum();
                let db: f64 = row.iter().zip(&centroids[b]).map(|(x, c)| (x - c) * (x - c)).sum();
                da.partial_cmp(&db).unwrap()
            }).unwrap();
            if best == l { correct += 1; }
        }
        println!("seed {}: centroid accuracy {:.4}", seed, correct as f64 / d.len() as f64);
    }
}
