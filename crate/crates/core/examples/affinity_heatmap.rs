// Softmax and raw-sum affinities of a small window, dumped as grids.

use ssrlab::affinity::{
    affinity_to_heatmap, compute_affinity, AffinityMode, StateVector, StateWindow,
};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    // two orthogonal unit states: softmax rows are (e, 1) / (e + 1)
    let w = StateWindow::from_states(vec![
        StateVector::new(vec![1.0, 0.0])?,
        StateVector::new(vec![0.0, 1.0])?,
    ])?;
    let c = compute_affinity(&w, AffinityMode::Softmax, 1.0)?;
    let e = std::f64::consts::E;
    println!(
        "softmax, tau = 1 (expect {:.6} on the diagonal)",
        e / (e + 1.0)
    );
    print_grid(&c);

    let w = StateWindow::from_states(vec![
        StateVector::new(vec![1.0, 0.2, 0.0])?,
        StateVector::new(vec![0.9, 0.3, 0.1])?,
        StateVector::new(vec![0.8, 0.5, 0.0])?,
    ])?;
    println!("raw-sum");
    print_grid(&compute_affinity(&w, AffinityMode::RawSum, 1.0)?);
    Ok(())
}

fn print_grid(c: &ssrlab::affinity::AffinityMatrix) {
    let h = affinity_to_heatmap(c);
    for i in 0..h.rows {
        let row: Vec<String> = h.row(i).iter().map(|x| format!("{x:.6}")).collect();
        println!("  [{}]", row.join(", "));
    }
    println!("  min {:.6} max {:.6}", h.min, h.max);
}

#[allow(dead_code)]
fn main() {
    run().expect("affinity heatmap");
}
