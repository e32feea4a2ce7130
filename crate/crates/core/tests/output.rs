use momentum_mpc::config::bundled_scenario;
use momentum_mpc::output::{csv_string, plot_com_xy, plot_com_z, plot_forces_z, plot_trigger_timeline, CSV_SCHEMA_VERSION};
use momentum_mpc::sim::run_scenario;

#[test]
fn single_tick_log_renders_every_plot() {
    let mut config = bundled_scenario("no_push_regulation").unwrap();
    config.simulation.duration = 0.01;
    let log = run_scenario(&config).unwrap();
    assert_eq!(log.ticks.len(), 1);
    for svg in [plot_com_xy(&log), plot_com_z(&log), plot_forces_z(&log), plot_trigger_timeline(&log)] {
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<polyline"));
        assert!(!svg.contains("NaN"));
    }
}

#[test]
fn csv_rows_match_header_width() {
    let mut config = bundled_scenario("side_push_20deg").unwrap();
    config.simulation.duration = 1.0;
    let log = run_scenario(&config).unwrap();
    let csv = csv_string(&log.ticks);
    let mut lines = csv.lines();
    let width = lines.next().unwrap().split(',').count();
    assert!(lines.all(|l| l.split(',').count() == width));
    assert_eq!(CSV_SCHEMA_VERSION, 1);
}

#[test]
fn commanded_right_force_is_zero_through_the_swing() {
    let mut config = bundled_scenario("side_push_20deg").unwrap();
    config.simulation.duration = 1.5;
    let log = run_scenario(&config).unwrap();
    let swing: Vec<_> = log.ticks.iter().filter(|t| t.phase.as_str() == "swing").collect();
    assert!(!swing.is_empty());
    for t in swing {
        assert!(t.commanded.right.force.z.abs() <= 1e-8, "t = {}: {}", t.time, t.commanded.right.force.z);
        assert_eq!(t.realized.right.force.z, 0.0);
    }
}
