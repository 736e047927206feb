mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stripfusion::balance::*;
use stripfusion::{BBox, Detection, Modality, Scale, Tensor4};

/// `n` jittered copies of the ground-truth boxes, in image pixels.
fn around(rng: &mut ChaCha8Rng, gts: &[BBox], m: Modality, n: usize, jitter: f64) -> Vec<Detection> {
    (0..n)
        .map(|k| {
            let g = gts[k % gts.len()];
            let j = |r: &mut ChaCha8Rng| r.gen_range(-jitter..jitter);
            let (x0, y0) = (g.x_min + j(rng), g.y_min + j(rng));
            let b = BBox::new(x0, y0, (g.x_max + j(rng)).max(x0 + 4.0), (g.y_max + j(rng)).max(y0 + 4.0)).unwrap();
            Detection::new("f", m, Scale::S80, b, rng.gen_range(0.0..=1.0)).unwrap()
        })
        .collect()
}

#[test]
fn kl_pipeline_matches_straight_line_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let gts = [
        BBox::new(20.0, 16.0, 52.0, 90.0).unwrap(),
        BBox::new(90.0, 40.0, 120.0, 110.0).unwrap(),
    ];
    for trial in 0..20 {
        let fv = Tensor4::random([3, 8, 16, 16], 1.0, &mut rng);
        let ft = Tensor4::random([3, 8, 16, 16], 1.0, &mut rng);
        // Alternate which branch is tighter so both directions are covered.
        let (jv, jt) = if trial % 2 == 0 { (3.0, 12.0) } else { (12.0, 3.0) };
        let vis = around(&mut rng, &gts, Modality::Visible, 14, jv);
        let ir = around(&mut rng, &gts, Modality::Thermal, 13, jt);
        let got = kl_alignment(&vis, &ir, &gts, &fv, &ft, 10, 8.0).unwrap();
        let (r_v, r_t, loss) = ref_kl_pipeline(&vis, &ir, &gts, &fv, &ft, 10, 8.0);
        assert_eq!(got.report.n_used(), 10);
        assert_eq!(got.m_v.n(), 10);
        assert!((got.report.r_v - r_v).abs() <= 1e-6);
        assert!((got.report.r_t - r_t).abs() <= 1e-6);
        assert!((got.loss - loss).abs() <= 1e-6, "{} vs {loss}", got.loss);
        assert_eq!(got.report.thermal_dominant(), r_t > r_v);
    }
}

#[test]
fn roi_align_matches_supersampled_average() {
    // On a smooth map, for small boxes well inside it, each bin value is
    // close to the mean of the bilinear field over the bin; check against a
    // 40x40 sampling.
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut smooth = Vec::new();
    for c in 0..2 {
        for y in 0..12 {
            for x in 0..12 {
                smooth.push((0.5 * x as f64 + 0.3 * y as f64 + c as f64).sin());
            }
        }
    }
    let map = Tensor4::from_vec([1, 2, 12, 12], smooth).unwrap();
    let d = Dense::from_tensor(&map);
    for _ in 0..200 {
        let w = rng.gen_range(0.2..1.2);
        let h = rng.gen_range(0.2..1.2);
        let x = rng.gen_range(2.0..8.0);
        let y = rng.gen_range(2.0..8.0);
        let b = BBox::new(x, y, x + w, y + h).unwrap();
        let got = roi_align(&map, &b, 0).unwrap().values;
        let n = 40;
        let mut k = 0;
        for c in 0..2 {
            for by in 0..3 {
                for bx in 0..3 {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            let yy = y + (by as f64 + (i as f64 + 0.5) / n as f64) * h / 3.0 - 0.5;
                            let xx = x + (bx as f64 + (j as f64 + 0.5) / n as f64) * w / 3.0 - 0.5;
                            s += ref_bilinear(&d, 0, c, yy, xx);
                        }
                    }
                    let want = s / (n * n) as f64;
                    assert!((got[k] - want).abs() <= 1e-2, "{} vs {want}", got[k]);
                    k += 1;
                }
            }
        }
    }
}

#[test]
fn roi_align_matches_reference_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let map = Tensor4::random([2, 3, 10, 14], 1.0, &mut rng);
    let d = Dense::from_tensor(&map);
    for _ in 0..300 {
        // Includes boxes hanging off every border.
        let b = random_box(&mut rng, 16.0, 0.3, 8.0);
        let b = BBox::new(b.x_min - 2.0, b.y_min - 2.0, b.x_max - 2.0, b.y_max - 2.0).unwrap();
        let got = roi_align(&map, &b, 0).unwrap().values;
        assert!(max_diff(&got, &ref_roi_align(&d, &b)) <= 1e-12);
    }
}

#[test]
fn relation_rows_are_stochastic() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..1000 {
        let n = rng.gen_range(1..12);
        let mut cos = vec![vec![0.0; n]; n];
        for i in 0..n {
            cos[i][i] = 1.0;
            for j in i + 1..n {
                let v = rng.gen_range(-1.0..=1.0);
                cos[i][j] = v;
                cos[j][i] = v;
            }
        }
        let m = relation_matrix(&cos);
        for row in m.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            assert!(row.iter().all(|&p| p > 0.0));
        }
        assert_eq!(kl_rowwise(&m, &m).unwrap(), 0.0);
    }
}
