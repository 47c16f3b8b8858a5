use adaptive_attractors::sim2::{simulate_form2, Form2Params};

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

#[test]
fn transfer_rate_trends_upward_with_colluders() {
    let params = Form2Params {
        num_trials: 5_000,
        max_colluders: 8,
        ..Default::default()
    };
    let rhos: Vec<f64> = (0..50)
        .map(|seed| {
            let curve = simulate_form2(&params, seed).unwrap();
            let (ns, rates): (Vec<f64>, Vec<f64>) = curve
                .points
                .iter()
                .filter_map(|p| p.rate.map(|r| (p.n as f64, r)))
                .unzip();
            spearman(&ns, &rates)
        })
        .collect();
    let m = rhos.iter().sum::<f64>() / rhos.len() as f64;
    let sd = (rhos.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (rhos.len() - 1) as f64).sqrt();
    let se = sd / (rhos.len() as f64).sqrt();
    assert!(m - 3.0 * se >= 0.0, "mean rho {m}, se {se}");
}

#[test]
fn gap_to_full_transfer_shrinks() {
    let params = Form2Params {
        num_trials: 20_000,
        max_colluders: 8,
        ..Default::default()
    };
    let mut first = 0.0;
    let mut last = 0.0;
    for seed in 0..10 {
        let c = simulate_form2(&params, seed).unwrap();
        first += c.rate(1).unwrap();
        last += c.rate(8).unwrap();
    }
    assert!(last >= first, "{first} {last}");
}
