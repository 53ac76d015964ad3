use carnot::engine::EngineConfig;
use carnot::oracle::{oracle_best_cycle, CycleFamily, stirling_closed_form};

fn main() {
    let cfg = EngineConfig::default();
    let t0 = std::time::Instant::now();
    for fam in [CycleFamily::CarnotLike, CycleFamily::StirlingRect, CycleFamily::OttoRect, CycleFamily::IrreversibleHybrid] {
        let t = std::time::Instant::now();
        let r = oracle_best_cycle(&cfg, fam).unwrap();
        println!("{:10} eta={:.9} period={} start=({}, {}) [{:?}]",
            format!("{:?}", fam), r.eta.unwrap(), r.period, r.start_v, r.start_t, t.elapsed());
    }
    println!("stirling closed form r=4: {:.9}", stirling_closed_form(&cfg, 4.0));
    println!("total {:?}", t0.elapsed());
    // Reversible grid for criterion 9
    let rev = EngineConfig { t_hot: 1200.0, t_cold: 300.0, v_min: 0.25, v_max: 4.0, dv: 0.25, ..EngineConfig::default() };
    let r = oracle_best_cycle(&rev, CycleFamily::CarnotLike).unwrap();
    println!("reversible-grid carnot: eta={:.12} period={} actions[0..6]={:?}", r.eta.unwrap(), r.period, &r.actions[..6.min(r.actions.len())]);
    let has_isochoric = r.actions.iter().any(|a| format!("{a}").starts_with("isochoric"));
    println!("  contains isochoric correction: {has_isochoric}");
    // Otto grid for criterion 4
    let otto_grid = EngineConfig { v_min: 1.9, ..EngineConfig::default() };
    let r = oracle_best_cycle(&otto_grid, CycleFamily::OttoRect).unwrap();
    println!("otto on [1.9,4.0]: eta={:.9} start_v={} period={}", r.eta.unwrap(), r.start_v, r.period);
}
