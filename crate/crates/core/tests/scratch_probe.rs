use std::collections::BTreeMap;

#[test]
fn probe_serde() {
    let x: f64 = -0.00041337545154634443_f64;
    let s1 = serde_json::to_string(&x).unwrap();
    let back: f64 = serde_json::from_str(&s1).unwrap();
    eprintln!("s1={} bits_eq={}", s1, x.to_bits() == back.to_bits());
    assert!(false);
}

#[test]
fn probe_saddle() {
    let m = qwkb_core::models::builtin("qairy", &BTreeMap::new()).unwrap().model;
    let theta = 0.41560478210449214_f64;
    // trace all rays from both bps, find which hits the other bp, report D
    let g = qwkb_core::network::build_graph(&m, theta, &qwkb_core::network::TraceCaps {
        max_generation: 0, max_abs_n: 1, max_mass: 60.0, stop_radius: 5e-4, max_steps: 20000,
    }).unwrap();
    for t in g.trajectories.iter() {
        for (target, tb) in [(num::complex::Complex64::new(1.0,0.0), "+1"), (num::complex::Complex64::new(-1.0,0.0), "-1")] {
            let mut best = f64::MAX; let mut bk = 0;
            for (k, p) in t.points.iter().enumerate() {
                let d = (num::complex::Complex64::new(p[0], p[1]) - target).norm();
                if d < best { best = d; bk = k; }
            }
            if best < 0.03 && bk > 5 {
                let l = num::complex::Complex64::new(t.log_branch[bk][0], t.log_branch[bk][1]);
                eprintln!("traj {} label {} parent {:?} stop {:?}: hits bp {} at dist {:.2e}, log_y there = {:.4}+{:.4}i, |D|={:.4}",
                    t.id, t.label, t.parent, t.stop, tb, best, l.re, l.im,
                    ((t.label.j - t.label.i) as f64 * l + num::complex::Complex64::new(0.0, 2.0*std::f64::consts::PI*t.label.n as f64)).norm());
            }
        }
    }
    assert!(false);
}
