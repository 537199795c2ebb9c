use std::fs;
use std::path::{Path, PathBuf};

use ftdyn_cli::report::{aggregate, mean_std, to_csv};
use proptest::prelude::*;

const SUCCESS_HEADER: &str = "hole,controller,data_fraction,success_rate,mean_steps\n";

fn run_dir(root: &Path, name: &str, success: &str) -> PathBuf {
    let d = root.join(name);
    fs::create_dir_all(d.join("mpc")).unwrap();
    fs::write(d.join("mpc/success.csv"), format!("{SUCCESS_HEADER}{success}")).unwrap();
    d
}

#[test]
fn two_row_fixture_matches_hand_computation() {
    let t = tempfile::tempdir().unwrap();
    let a = run_dir(t.path(), "a", "round-15,mpc,0.2,0.9,3\nround-15,random,0,0.2,6\n");
    let b = run_dir(t.path(), "b", "round-15,mpc,0.2,0.7,4\nround-15,random,0,0.4,5\n");
    let rows = aggregate(&[a, b]).unwrap();
    assert_eq!(rows.len(), 4);
    let get = |c: &str, m: &str| rows.iter().find(|r| r.condition == c && r.metric == m).unwrap();
    let r = get("mpc", "success_rate");
    assert_eq!(r.n, 2);
    assert!((r.mean - 0.8).abs() < 1e-12);
    // sample std of {0.9, 0.7}: sqrt(2 * 0.1^2 / 1)
    assert!((r.std - 0.02f64.sqrt()).abs() < 1e-12);
    let r = get("random", "mean_steps");
    assert!((r.mean - 5.5).abs() < 1e-12);
    assert!((r.std - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn three_seeds_give_one_row_per_condition() {
    let t = tempfile::tempdir().unwrap();
    let dirs: Vec<PathBuf> = (0..3)
        .map(|i| {
            run_dir(
                t.path(),
                &format!("s{i}"),
                &format!("hexagon-15,mpc,0.2,0.{i},2\nhexagon-15,random,0,0.1,6\n"),
            )
        })
        .collect();
    let rows = aggregate(&dirs).unwrap();
    let rates: Vec<_> = rows.iter().filter(|r| r.metric == "success_rate").collect();
    assert_eq!(rates.len(), 2);
    assert!(rates.iter().all(|r| r.n == 3));
    assert!((rates[0].mean - 0.1).abs() < 1e-12 && (rates[0].std - 0.1).abs() < 1e-12);
    assert_eq!(rates[1].std, 0.0);
    let text = to_csv(&rows);
    assert!(text.starts_with("source,hole,condition,data_fraction,metric,n,mean,std\n"));
    assert_eq!(text.lines().count(), 1 + rows.len());
}

#[test]
fn empty_input_is_an_error() {
    assert!(aggregate(&[]).is_err());
    let t = tempfile::tempdir().unwrap();
    assert!(
        aggregate(&[t.path().to_path_buf()]).is_err(),
        "no tables is not an empty report"
    );
}

#[test]
fn schema_mismatches_are_errors() {
    let t = tempfile::tempdir().unwrap();
    let a = run_dir(t.path(), "a", "round-15,mpc,0.2,0.9,3\n");
    let other_rows = run_dir(t.path(), "b", "square-15,mpc,0.2,0.9,3\n");
    assert!(aggregate(&[a.clone(), other_rows]).is_err());

    let c = t.path().join("c");
    fs::create_dir_all(c.join("mpc")).unwrap();
    fs::write(
        c.join("mpc/success.csv"),
        "hole,controller,data_fraction,rate,mean_steps\nround-15,mpc,0.2,0.9,3\n",
    )
    .unwrap();
    assert!(aggregate(&[a.clone(), c]).is_err());

    let missing = t.path().join("d");
    fs::create_dir_all(&missing).unwrap();
    assert!(aggregate(&[a.clone(), missing]).is_err());

    let nan = run_dir(t.path(), "e", "round-15,mpc,0.2,high,3\n");
    assert!(aggregate(&[a, nan]).is_err());

    let dup = run_dir(t.path(), "f", "round-15,mpc,0.2,0.9,3\nround-15,mpc,0.2,0.8,3\n");
    assert!(aggregate(&[dup]).is_err());
}

#[test]
fn report_is_a_pure_function_of_inputs() {
    let t = tempfile::tempdir().unwrap();
    let a = run_dir(t.path(), "a", "round-15,mpc,0.2,0.9,3\n");
    let b = run_dir(t.path(), "b", "round-15,mpc,0.2,0.5,3\n");
    let before = fs::read(a.join("mpc/success.csv")).unwrap();
    let x = to_csv(&aggregate(&[a.clone(), b.clone()]).unwrap());
    let y = to_csv(&aggregate(&[a.clone(), b]).unwrap());
    assert_eq!(x, y);
    assert_eq!(fs::read(a.join("mpc/success.csv")).unwrap(), before);
}

proptest! {
    #[test]
    fn mean_std_matches_two_pass_definition(v in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
        let (m, s) = mean_std(&v);
        let n = v.len() as f64;
        let mean: f64 = v.iter().sum::<f64>() / n;
        prop_assert!((m - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
        if v.len() == 1 {
            prop_assert_eq!(s, 0.0);
        } else {
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            prop_assert!((s - var.sqrt()).abs() <= 1e-9 * (1.0 + var.sqrt()));
        }
    }
}
