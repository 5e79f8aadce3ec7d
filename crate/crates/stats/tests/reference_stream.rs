//! Full-size tests against values computed by an independent implementation
//! on the same deterministic one-million-bit stream.

use dlt_stats::nist::*;
use std::sync::OnceLock;

const N: usize = 1_000_000;

/// Top bit of a 64-bit LCG seeded with 12345.
fn stream() -> &'static [u8] {
    static BITS: OnceLock<Vec<u8>> = OnceLock::new();
    BITS.get_or_init(|| {
        let mut x: u64 = 12345;
        (0..N)
            .map(|_| {
                x = x
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (x >> 63) as u8
            })
            .collect()
    })
}

fn close(name: &str, got: f64, want: f64) {
    assert!(
        (got - want).abs() <= 1e-8 * want.max(1e-3),
        "{name}: got {got}, want {want}"
    );
}

#[test]
fn single_p_value_tests() {
    let b = stream();
    close("frequency", frequency(b), 0.8587229757402333);
    close(
        "block_frequency",
        block_frequency(b, 128),
        0.01572797171784521,
    );
    close("runs", runs(b), 0.7856463749199016);
    close("longest_run", longest_run(b), 0.6072212389848961);
    close("rank", rank(b, 32, 32), 0.34191317484851214);
    close("dft", dft(b), 0.39342281444373073);
    close("overlapping", overlapping_template(b), 0.37394981390232646);
    close("universal", universal(b, 7, 1280).0, 0.07581513849877818);
    close("apen", approximate_entropy(b, 2), 0.20385303401641278);
    close(
        "linear_complexity",
        linear_complexity(b, 500),
        0.6895308220328213,
    );
}

#[test]
fn multi_p_value_tests() {
    let b = stream();
    let [fwd, bwd] = cumulative_sums(b);
    close("cusum forward", fwd, 0.9987922760540302);
    close("cusum backward", bwd, 0.9591085086100011);

    let [p1, p2] = serial(b, 16);
    close("serial 1", p1, 0.12430974787686155);
    close("serial 2", p2, 0.2179005748838643);

    let nop = non_overlapping_template(b, 9, NON_OVERLAPPING_BLOCKS);
    assert_eq!(nop.len(), 148);
    close("nonoverlap first", nop[0], 0.2751961006878067);
    close("nonoverlap last", nop[147], 0.03259146003497633);
    close(
        "nonoverlap min",
        nop.iter().cloned().fold(f64::INFINITY, f64::min),
        0.0149056758939987,
    );
}

#[test]
fn excursion_tests() {
    let b = stream();
    let ex = random_excursions(b);
    assert_eq!(ex.cycles, 2697);
    let want = [
        0.4719260135530474,
        0.9466866773722784,
        0.03788632762790784,
        0.1346242859147733,
        0.38357680789823,
        0.4611898982442615,
        0.061309126818575636,
        0.1324317824266768,
    ];
    for (i, (&g, &w)) in ex.p_values.iter().zip(&want).enumerate() {
        close(&format!("excursion state {}", EXCURSION_STATES[i]), g, w);
    }

    let var = random_excursions_variant(b);
    assert_eq!(var.cycles, 2697);
    let want = [
        0.37259220936977244,
        0.408710532657686,
        0.4410765956691298,
        0.29327477769702925,
        0.23618421137723267,
        0.35964472829424854,
        0.3973310814670242,
        0.44574510561930925,
        0.2700778614946189,
        0.288219460871192,
        0.09717740499567765,
        0.011305771105247544,
        0.016709794759638286,
        0.00215422175729591,
        0.00015363736170860952,
        0.0003015415719997295,
        0.001037884709536858,
        0.0013744913625285233,
    ];
    for (i, (&g, &w)) in var.p_values.iter().zip(&want).enumerate() {
        close(&format!("variant state {}", VARIANT_STATES[i]), g, w);
    }
}

#[test]
fn run_test_applies_every_test_at_full_size() {
    let stream: dlt_core::model::BitStream = stream().iter().map(|&b| b == 1).collect();
    let params = TestParams::default();
    for id in TestId::ALL {
        let r = run_test(id, &stream, &params);
        assert_ne!(
            r.status,
            TestStatus::InsufficientData,
            "{id}: {:?}",
            r.requirement
        );
        assert!(r.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
