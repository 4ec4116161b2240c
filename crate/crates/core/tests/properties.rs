use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use dfplan::hwmodel::{parse_hardware, samples};
use dfplan::kernelir::{gemm, parse_kernel, GemmShape};
use dfplan::mapper::{enumerate_mappings, LoopSource};
use dfplan::perfmodel::{loop_time, rank, traffic};
use dfplan::reuse::{enumerate_candidates, ReuseOptions};
use dfplan::simref::{simulate, SimOptions};

fn mesh_text(x: u32, y: u32) -> String {
    let mut s = format!(
        "dim x = {x}\ndim y = {y}\ndim ch = 1\n\ncores core(x, y) {{\n  mat shape=(8,16,16) tput=1/4 count=1;\n  vec width=32 tput=1 count=1\n}}\n\n\
         mem l1(x, y) size=1MiB bw=64\nmem dram(ch) size=1GiB bw=32\n\nmux core(x, y) -> l1(x, y) bw=64\nmux core(x, y) -> dram(0) bw=64\n"
    );
    if x > 1 {
        s += &format!("net h links l1(x, y) -> l1((x + 1) % {x}, y) bw=32\n");
    }
    if y > 1 {
        s += &format!("net v links l1(x, y) -> l1(x, (y + 1) % {y}) bw=16\n");
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn loop_time_is_monotone(i in 1u64..40, l in 0u64..5000, c in 0u64..5000, s in 0u64..5000, d in 1u64..500) {
        let t = loop_time(i, l, c, s).unwrap();
        prop_assert!(loop_time(i + 1, l, c, s).unwrap() >= t);
        prop_assert!(loop_time(i, l + d, c, s).unwrap() >= t);
        prop_assert!(loop_time(i, l, c + d, s).unwrap() >= t);
        prop_assert!(loop_time(i, l, c, s + d).unwrap() >= t);
        // never below pure compute or pure transfer
        prop_assert!(t >= i * c && t >= i * l && t >= i * s);
    }

    #[test]
    fn hardware_text_round_trips(x in 1u32..9, y in 1u32..9) {
        let hw = parse_hardware(&mesh_text(x, y)).unwrap();
        let again = parse_hardware(&hw.to_string()).unwrap();
        prop_assert_eq!(&again, &hw);
        prop_assert_eq!(again.num_cores(), (x * y) as usize);
    }

    #[test]
    fn kernel_text_round_trips(m in 1u64..600, n in 1u64..600, k in 1u64..600, b in prop::sample::select(vec![32u64, 64, 128])) {
        let kern = gemm(&GemmShape { m, n, k, bm: b, bn: b, bk: b, elem_bytes: 2 });
        let again = parse_kernel(&kern.to_string()).unwrap();
        prop_assert_eq!(again, kern);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn waves_and_cores_cover_the_grid_once(gm in 1u64..=8, gn in 1u64..=8, sk in 1u64..=3) {
        let hw = parse_hardware(samples::MESH_4X8).unwrap();
        let src = format!(
            "kernel cover {{\n  grid m = {gm}\n  grid n = {gn}\n  seq k = {sk}\n  tensor A[{}, {}] elem=2\n  tensor C[{}, {}] elem=2\n  load a = A[m, k] tile(8, 8)\n  op r = vec(a)\n  store C[m, n] tile(8, 8) = r\n}}\n",
            gm * 8, sk * 8, gm * 8, gn * 8
        );
        let kern = parse_kernel(&src).unwrap();
        for m in enumerate_mappings(&kern, &hw, 512).unwrap() {
            let waves: Vec<usize> = (0..m.nest.len()).filter(|&l| matches!(m.nest[l].source, LoopSource::Wave(_))).collect();
            let mut hits: BTreeMap<Vec<i64>, u32> = BTreeMap::new();
            for core in m.running_cores() {
                let mut iter = vec![0u64; m.nest.len()];
                loop {
                    if let Some(p) = m.grid_point(&core, &iter) {
                        *hits.entry(p).or_default() += 1;
                    }
                    let mut j = waves.len();
                    while j > 0 {
                        j -= 1;
                        iter[waves[j]] += 1;
                        if iter[waves[j]] < m.nest[waves[j]].extent {
                            break;
                        }
                        iter[waves[j]] = 0;
                        if j == 0 {
                            j = usize::MAX;
                            break;
                        }
                    }
                    if j == usize::MAX || waves.is_empty() {
                        break;
                    }
                }
            }
            prop_assert_eq!(hits.len() as u64, gm * gn, "{}", m.encoding);
            prop_assert!(hits.values().all(|&c| c == 1), "{} repeats a grid point", m.encoding);
        }
    }

    #[test]
    fn simulator_moves_what_the_model_counts(m in 64u64..400, n in 64u64..400, k in 32u64..300, seed in any::<u64>()) {
        let hw = parse_hardware(samples::MESH_4X8).unwrap();
        let kern = gemm(&GemmShape { m, n, k, bm: 64, bn: 64, bk: 64, elem_bytes: 2 });
        let maps = enumerate_mappings(&kern, &hw, 512).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let mapping = Arc::new(maps.choose(&mut rng).unwrap().clone());
        let cands = enumerate_candidates(&kern, &hw, &mapping, &ReuseOptions::default());
        let c = cands.choose(&mut rng).unwrap();
        let tr = traffic(&kern, &hw, c);
        let sim = simulate(&kern, &hw, c, SimOptions::default()).unwrap();
        prop_assert_eq!((sim.dram_read_bytes, sim.dram_write_bytes, sim.noc_bytes), (tr.dram_read_bytes, tr.dram_write_bytes, tr.noc_bytes));
        // the output is written exactly once and every input element is read
        prop_assert_eq!(tr.dram_write_bytes, m * n * 2);
        prop_assert!(tr.dram_read_bytes >= (m * k + k * n) * 2);
    }

    #[test]
    fn ranking_ignores_input_order(seed in any::<u64>()) {
        let hw = parse_hardware(samples::WORMHOLE).unwrap();
        let kern = gemm(&GemmShape { m: 512, n: 512, k: 256, bm: 64, bn: 64, bk: 64, elem_bytes: 2 });
        let mapping = Arc::new(enumerate_mappings(&kern, &hw, 512).unwrap().into_iter().find(|m| m.encoding == "m:x,n:y").unwrap());
        let cands = enumerate_candidates(&kern, &hw, &mapping, &ReuseOptions::default());
        let mut shuffled = cands.clone();
        shuffled.shuffle(&mut StdRng::seed_from_u64(seed));
        let ids = |cs: &[dfplan::reuse::Candidate]| -> Vec<(u64, String)> {
            rank(&kern, &hw, cs).unwrap().into_iter().map(|(c, e)| (e.total_cycles, c.id.clone())).collect()
        };
        prop_assert_eq!(ids(&cands), ids(&shuffled));
    }
}
