use statrs::distribution::{ContinuousCDF, Normal};

use saifdl::data::{generate_regression_demo, parse_csv, to_csv_string};
use saifdl::Targets;

/// P(3 + 1.5 x + 0.05 z > 4.2) for x ~ U(0,1), z ~ N(0,1), by midpoint
/// quadrature of the normal tail over x.
fn exceedance_probability() -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let steps = 200_000;
    let h = 1.0 / steps as f64;
    (0..steps)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            normal.sf((4.2 - 3.0 - 1.5 * x) / 0.05)
        })
        .sum::<f64>()
        * h
}

#[test]
fn regression_demo_exceeds_the_cap_about_a_fifth_of_the_time() {
    let oracle = exceedance_probability();
    assert!((oracle - 0.2).abs() < 1e-3, "oracle {oracle}");

    let ds = generate_regression_demo(100_000, 1).unwrap();
    let Targets::Values(v) = &ds.labels else {
        panic!("regression targets expected")
    };
    let fraction = v.iter().filter(|&&t| t > 4.2).count() as f64 / v.len() as f64;
    assert!((fraction - 0.20).abs() <= 0.01, "fraction {fraction}");
    // Binomial standard error at n = 1e5 is about 1.3e-3.
    assert!(
        (fraction - oracle).abs() < 5e-3,
        "fraction {fraction} oracle {oracle}"
    );
}

#[test]
fn generated_csv_round_trips_exactly() {
    let ds = generate_regression_demo(500, 9).unwrap();
    let back = parse_csv(&to_csv_string(&ds)).unwrap();
    assert_eq!(back, ds);
}
