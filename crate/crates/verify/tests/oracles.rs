use scdn_verify::{format_table, run_oracles};

#[test]
fn every_oracle_agrees() {
    let rows = run_oracles(true);
    print!("{}", format_table(&rows));
    assert!(rows.iter().all(|r| r.passed), "{}", format_table(&rows));
}
