//! Human-readable design table.

use std::fmt::Write;

use crate::report::DesignReport;

pub fn design_table(report: &DesignReport) -> String {
    let mut out = String::new();
    for s in &report.stages {
        let d = &s.design;
        let _ = writeln!(
            out,
            "stage {}  {}  D = {:.4}  f = {:.4} kHz  R = {:.4} Ω",
            s.stage,
            d.topology.as_str(),
            d.duty,
            1e-3 / d.period,
            d.load_resistance
        );
        for l in &d.inductances {
            let _ = writeln!(
                out,
                "  {:<4}{:>12.3} µH min {:>12.3} µH selected",
                l.name,
                l.l_min * 1e6,
                l.l_selected * 1e6
            );
        }
        for c in &d.capacitances {
            let _ = writeln!(
                out,
                "  {:<4}{:>12.3} µF     {:>12.4} V  ripple budget",
                c.name,
                c.capacitance * 1e6,
                c.ripple_budget_abs
            );
        }
        if let Some(b) = &d.current_bounds {
            let _ = writeln!(
                out,
                "  I_L avg {:.4} A  max {:.4} A  min {:.4} A",
                b.i_l_avg, b.i_max, b.i_min
            );
        }
    }
    out
}
