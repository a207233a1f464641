use super::*;
use crate::case_store::load_case;
use crate::projection::{attenuation_report, Field, Unit};
use crate::mesh_graph::build_incidence;

fn tiny(offsets: [f64; 2], frames: usize) -> CaseTrajectory {
    generate_case(&BeamSpec::default(), MeshScale::Tiny, offsets, frames).unwrap()
}

#[test]
fn force_law_knots() {
    let spec = BeamSpec::default();
    assert_eq!(spec.force_at(0.0), 0.0);
    assert!((spec.force_at(10.02) - 85.0).abs() < 1e-12);
    assert!((spec.force_at(33.4) - 102.0).abs() < 1e-12);
    assert!((spec.force_at(5.01) - 42.5).abs() < 1e-12);
}

#[test]
fn global_response_of_a_case() {
    let spec = BeamSpec::default();
    let case = tiny([0.0, 0.0], 21);
    let mid = midspan_node(&spec, &case.coords);
    assert_eq!(case.coords[mid], [1350.0, 125.0, 75.0]);
    let uy = |t: usize| case.u_frame(t)[mid * 3 + 1];
    assert!((uy(20) + 33.4).abs() < 1e-9);
    assert!((case.rf2[20] - 102.0).abs() < 1e-9);
    // frame 6 sits at 0.3 progress, exactly on the yield knee
    assert!((uy(6) + 10.02).abs() < 1e-9);
    assert!((case.rf2[6] - 85.0).abs() < 1e-9);
    assert_eq!(case.frame_times[0], 0.0);
    assert_eq!(case.frame_times[20], 1.0);
}

#[test]
fn first_frame_is_undeformed() {
    let case = tiny([75.0, -125.0], 4);
    assert!(case.u_frame(0).iter().all(|&v| v == 0.0));
    assert!(case.s_frame(0).iter().all(|&v| v == 0.0));
    assert!(case.peeq_frame(0).iter().all(|&v| v == 0.0));
    assert_eq!(case.rf2[0], 0.0);
}

#[test]
fn plastic_strain_never_decreases() {
    let case = tiny([-200.0, 100.0], 11);
    for t in 1..11 {
        for (a, b) in case.peeq_frame(t - 1).iter().zip(case.peeq_frame(t)) {
            assert!(b >= a);
        }
    }
    assert!(case.peeq_frame(10).iter().any(|&p| p > 0.0));
}

#[test]
fn symmetric_blocks_give_a_mirrored_field() {
    let case = tiny([-50.0, 50.0], 5);
    let [nx, ny, nz] = MeshScale::Tiny.dims(&BeamSpec::default());
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    for t in 0..5 {
        let s = case.s_frame(t);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    assert!((s[idx(i, j, k)] - s[idx(nx - 1 - i, j, k)]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn statics_balance() {
    let spec = BeamSpec::default();
    let [a, b] = spec.supports();
    for (pos, force) in [([950.0, 1750.0], 102.0), ([750.0, 1950.0], 40.0), ([1100.0, 1600.0], 85.0)] {
        let r = support_reactions(&spec, pos, force);
        assert!((r[0] + r[1] - force).abs() < 1e-12);
        let moment = r[0] * a + r[1] * b - 0.5 * force * (pos[0] + pos[1]);
        assert!(moment.abs() < 1e-8);
        assert_eq!(bending_moment(&spec, pos, force, a), 0.0);
        assert!(bending_moment(&spec, pos, force, b - 1e-9).abs() < 1e-6);
    }
    // constant moment between symmetric blocks
    let m1 = bending_moment(&spec, [950.0, 1750.0], 100.0, 1000.0);
    let m2 = bending_moment(&spec, [950.0, 1750.0], 100.0, 1700.0);
    assert!((m1 - m2).abs() < 1e-9);
    assert!((m1 - 50.0 * 800.0).abs() < 1e-9);
}

#[test]
fn asymmetric_blocks_shift_the_peak() {
    let spec = BeamSpec::default();
    let case = generate_case(&spec, MeshScale::Full, [-200.0, 0.0], 2).unwrap();
    let s = case.s_frame(1);
    let (peak, _) = s.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let x = case.connectivity[peak].iter().map(|&n| case.coords[n][0]).sum::<f64>() / 8.0;
    assert!((x - 750.0).abs() <= 25.0 || (x - 1750.0).abs() <= 25.0, "peak at x = {x}");
    assert!((x - spec.midspan()).abs() > 100.0);
}

#[test]
fn full_mesh_counts_and_load_nodes() {
    let spec = BeamSpec::default();
    assert_eq!(MeshScale::Full.dims(&spec), [108, 10, 6]);
    let case = generate_case(&spec, MeshScale::Full, [0.0, 0.0], 2).unwrap();
    assert_eq!((case.n_nodes(), case.n_elems()), (8393, 6480));
    // blocks are 100 mm wide on a 25 mm grid: 5 columns × 7 across the width, twice
    assert_eq!(case.load_nodes.len(), 2 * 5 * 7);
    assert!(case.load_nodes.iter().all(|&n| case.coords[n][1] == spec.depth));
}

#[test]
fn ultimate_frame_is_localized() {
    let case = generate_case(&BeamSpec::default(), MeshScale::Full, [0.0, 0.0], 21).unwrap();
    let s = case.s_frame(20);
    let peak = s.iter().cloned().fold(f64::MIN, f64::max);
    let above = s.iter().filter(|&&v| v > 0.5 * peak).count() as f64 / s.len() as f64;
    assert!(above < 0.2, "{above}");
    let inc = build_incidence(&case.connectivity, case.n_nodes()).unwrap();
    let rep = attenuation_report(&Field::scalar(s.to_vec(), Unit::Megapascal), &inc).unwrap();
    assert!(rep.reduction_percent > 10.0);
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(tiny([25.0, -25.0], 6), tiny([25.0, -25.0], 6));
}

#[test]
fn offsets_are_checked() {
    let spec = BeamSpec::default();
    assert!(spec.load_positions([10.0, 0.0]).is_err());
    assert!(spec.load_positions([0.0, 225.0]).is_err());
    assert_eq!(spec.load_positions([-200.0, 200.0]).unwrap(), [750.0, 1950.0]);
    assert!(generate_case(&spec, MeshScale::Tiny, [0.0, 0.0], 1).is_err());
    let overlapping = BeamSpec {
        baseline_positions: [1300.0, 1400.0],
        ..spec.clone()
    };
    assert!(overlapping.load_positions([0.0, 0.0]).is_err());
    let bad_mesh = BeamSpec { mesh_size: 40.0, ..spec };
    assert!(bad_mesh.validate().is_err());
}

#[test]
fn mesh_scale_names() {
    for m in [MeshScale::Full, MeshScale::Tiny] {
        assert_eq!(MeshScale::parse(m.name()).unwrap(), m);
    }
    assert!(MeshScale::parse("huge").is_err());
}

#[test]
fn sampled_campaigns() {
    let spec = BeamSpec::default();
    assert_eq!(offset_grid(&spec).len(), 17);
    let c = CampaignSpec::sampled(&spec, MeshScale::Tiny, 190, 21, 7).unwrap();
    let mut seen = c.offsets.clone();
    seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
    seen.dedup();
    assert_eq!(seen.len(), 190);
    assert_eq!(c, CampaignSpec::sampled(&spec, MeshScale::Tiny, 190, 21, 7).unwrap());
    assert_ne!(c.offsets, CampaignSpec::sampled(&spec, MeshScale::Tiny, 190, 21, 8).unwrap().offsets);
    assert!(CampaignSpec::sampled(&spec, MeshScale::Tiny, 290, 21, 7).is_err());
    assert!(CampaignSpec::sampled(&spec, MeshScale::Tiny, 0, 21, 7).is_err());
}

#[test]
fn campaign_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = BeamSpec::default();
    let campaign = CampaignSpec::sampled(&spec, MeshScale::Tiny, 3, 4, 1).unwrap();
    let index = generate_campaign(&spec, &campaign, dir.path()).unwrap();
    assert_eq!(CampaignIndex::load(dir.path()).unwrap(), index);
    for (i, entry) in index.cases.iter().enumerate() {
        let case = load_case(&index.case_dir(dir.path(), i)).unwrap();
        assert_eq!(case, generate_case(&spec, MeshScale::Tiny, entry.offsets, 4).unwrap());
    }
    let dup = CampaignSpec {
        offsets: vec![[0.0, 0.0], [0.0, 0.0]],
        ..campaign
    };
    assert!(generate_campaign(&spec, &dup, &dir.path().join("dup")).is_err());
}

#[test]
fn single_hex_fixture() {
    let case = single_hex_case(3).unwrap();
    assert_eq!((case.n_nodes(), case.n_elems(), case.n_frames()), (8, 1, 3));
    assert!(case.u_frame(0).iter().all(|&v| v == 0.0));
    assert!(case.s.iter().zip(&case.rf2).skip(1).all(|(s, f)| *s > 0.0 && *f > 0.0));
    assert!(single_hex_case(1).is_err());
}
