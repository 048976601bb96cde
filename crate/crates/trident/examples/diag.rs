//! Temporary diagnostic: per-region structure at a given depth.

use trident::analysis::{AnalysisBundle, AnalysisConfig};
use trident::kinematics::{
    forward_kinematics_on, inverse_kinematics, ManipulatorGeometry, PhiGrid, Pose,
};

fn main() {
    let depth: u8 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(6);
    let g = ManipulatorGeometry::<f64>::example();
    let mut cfg = AnalysisConfig::default();
    cfg.max_depth = depth;
    let b = AnalysisBundle::build(g, cfg).expect("bundle");
    let g = &b.geometry;
    let grid = PhiGrid::new(b.config.phi_samples);

    let n = b.basic.region_count();
    println!("regions: {n}");
    println!(
        "{:>4} {:>6} {:>6} {:>5} {:>8} {:>8}  class",
        "id", "aspect", "cells", "count", "vol", "imgvol"
    );
    let mut per_zone: std::collections::BTreeMap<(u32, usize), Vec<(u32, usize)>> =
        std::collections::BTreeMap::new();
    for r in 0..n {
        let cells = b.basic.region_cells(r);
        let sz = cells.len();
        // fiber count at the median cell center
        let mid = cells[sz / 2];
        let c = b.basic.tree().cell_box(mid).center();
        let q = inverse_kinematics(g, &Pose::new(c[0], c[1], c[2]));
        let fc = forward_kinematics_on(&grid, g, &q).len();
        let a = b.region_aspect[r as usize];
        per_zone.entry((a, fc)).or_default().push((r, sz));
        if sz >= 10 {
            println!(
                "{:>4} {:>6} {:>6} {:>5} {:>8.1} {:>8.2}  {}",
                r,
                a,
                sz,
                fc,
                b.basic.region_volume(r),
                b.components[r as usize].volume(),
                b.coincidence.class_of[r as usize],
            );
        }
    }
    println!("\nper (aspect, fiber-count): region count / sizes (top 12)");
    for ((a, fc), mut v) in per_zone {
        v.sort_by_key(|(_, s)| std::cmp::Reverse(*s));
        let sizes: Vec<usize> = v.iter().map(|(_, s)| *s).take(12).collect();
        println!("  aspect {a} count {fc}: {} regions, sizes {:?}", v.len(), sizes);
    }

    // Jaccard matrix among the 24 largest regions.
    let mut by_size: Vec<u32> = (0..n).collect();
    by_size.sort_by_key(|r| std::cmp::Reverse(b.basic.region_cells(*r).len()));
    let top: Vec<u32> = by_size.into_iter().take(24).collect();
    println!("\nJaccard among top regions (ids {:?}):", top);
    for i in &top {
        let row: Vec<String> = top
            .iter()
            .map(|j| {
                let v = b.coincidence.jaccard[*i as usize][*j as usize];
                if v >= 0.005 {
                    format!("{:4.2}", v)
                } else {
                    "  . ".into()
                }
            })
            .collect();
        println!("{:>4}: {}", i, row.join(" "));
    }
}
