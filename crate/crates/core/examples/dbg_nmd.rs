use nmd_tsa::modal::{eigen_decompose, to_modal};
use nmd_tsa::model::{self, taylor_expand};
use nmd_tsa::nmd::{decoupling_residual, nmd_decouple};

fn main() {
    let sys = model::synthetic::ring_system(4, 0.15, 377.0);
    let eq = sys.find_equilibrium(&vec![0.0; 4]).unwrap();
    let exp = taylor_expand(&sys, &eq.delta, 3).unwrap();
    let ms = eigen_decompose(&sys.jacobian(&eq.delta)).unwrap();
    for m in &ms.modes {
        println!("mode {}: {} Hz, lambda {}", m.index, m.frequency_hz, m.eigenvalue);
    }
    let modal = to_modal(&exp.field, &ms).unwrap();
    let (chain, dec) = nmd_decouple(&modal, 3).unwrap();
    println!("residual = {:.3e}", decoupling_residual(&dec.field));
    for (r, row) in dec.field.rows().iter().enumerate() {
        for (mon, c) in row {
            let intra = mon.0.iter().all(|&v| (v as usize) / 2 == r / 2);
            if !intra && c.norm() > 1e-13 {
                println!("row {r} mon {:?} -> {:.3e}", mon.0, c.norm());
            }
        }
    }
    for (i, map) in chain.maps.iter().enumerate() {
        println!("H{} max coef {:.3}", i + 2, map.max_coeff());
    }
}
