//! Canned recipes, one per figure, each writing CSV plus a gnuplot script.

use clap::ValueEnum;
use serde_json::json;

use ringwave_core::transient::Mode;

use crate::commands::{
    lossless_impedance_sweep, response_summary, response_table, run_response, run_sweep, sweep_table, variance_sweep,
};
use crate::config::ScenarioConfig;
use crate::error::CliError;
use crate::output::Outputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Input reactance versus frequency for one to five cells.
    #[value(name = "4")]
    Impedance,
    /// Divider output versus pump power.
    #[value(name = "9")]
    DividerSweep,
    /// Divider frequency response at two pump powers.
    #[value(name = "10")]
    DividerResponse,
    /// Doubler output versus input power.
    #[value(name = "11")]
    DoublerSweep,
    /// Doubler frequency response at 0 dBm.
    #[value(name = "12")]
    DoublerResponse,
    /// Ranging phase-error variance versus number of reflectors.
    #[value(name = "1c")]
    Localization,
}

const MAX_CELLS: usize = 5;
const DIVIDER_DRIVES: [f64; 2] = [2.0, 4.0];

struct Plot<'a> {
    name: &'a str,
    title: &'a str,
    xlabel: &'a str,
    ylabel: &'a str,
    extra: &'a str,
    /// `(csv file, x column, y column)`; series titles come from the CSV header.
    series: Vec<(String, usize, usize)>,
}

impl Plot<'_> {
    fn script(&self) -> String {
        let lines: Vec<String> = self
            .series
            .iter()
            .map(|(file, x, y)| format!("\"{file}\" using {x}:{y} with linespoints title columnhead({y}).\" {file}\""))
            .collect();
        format!(
            "set datafile separator \",\"\nset key autotitle columnhead\nset grid\nset title \"{}\"\nset xlabel \"{}\"\nset ylabel \"{}\"\n{}set terminal pngcairo size 900,600\nset output \"{}.png\"\nplot {}\n",
            self.title,
            self.xlabel,
            self.ylabel,
            self.extra,
            self.name,
            lines.join(", \\\n     "),
        )
    }
}

pub fn run(figure: Figure, cfg: &ScenarioConfig) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let plot = match figure {
        Figure::Impedance => {
            let (t, found) = lossless_impedance_sweep(cfg, MAX_CELLS)?;
            out.csv("fig4", &t);
            out.json("fig4", &json!({ "resonances": found }));
            Plot {
                name: "fig4",
                title: "Lossless ring input reactance",
                xlabel: "frequency (Hz)",
                ylabel: "Im Z_in (ohm)",
                extra: "set yrange [-500:500]\n",
                series: (2..=MAX_CELLS + 1).map(|c| ("fig4.csv".to_string(), 1, c)).collect(),
            }
        }
        Figure::DividerSweep | Figure::DoublerSweep => {
            let (mode, name) = if figure == Figure::DividerSweep { (Mode::Divider, "fig9") } else { (Mode::Doubler, "fig11") };
            let r = run_sweep(cfg, mode)?;
            out.csv(name, &sweep_table(&r));
            out.json(
                name,
                &json!({
                    "f_in": r.f_in,
                    "f_out": r.f_out,
                    "threshold": r.threshold,
                    "conversion_loss_db": r.conversion_loss_db,
                    "small_signal_slope": r.small_signal_slope,
                }),
            );
            Plot {
                name,
                title: if mode == Mode::Divider { "Divider output versus pump power" } else { "Doubler output versus input power" },
                xlabel: "input power (dBm)",
                ylabel: "output power (dBm)",
                extra: "",
                series: vec![(format!("{name}.csv"), 1, 2)],
            }
        }
        Figure::DividerResponse => {
            let mut summaries = Vec::new();
            let mut series = Vec::new();
            for p in DIVIDER_DRIVES {
                let r = run_response(cfg, Mode::Divider, p)?;
                let file = format!("fig10_{p}dbm");
                out.csv(&file, &response_table(&r));
                summaries.push(response_summary(&r));
                series.push((format!("{file}.csv"), 1, 2));
            }
            let bw = |i: usize| summaries[i]["bandwidth"].as_f64().unwrap_or(0.0);
            out.json("fig10", &json!({ "responses": summaries, "wider_at_higher_drive": bw(1) > bw(0) }));
            Plot {
                name: "fig10",
                title: "Divider frequency response",
                xlabel: "input frequency (Hz)",
                ylabel: "output power (dBm)",
                extra: "",
                series,
            }
        }
        Figure::DoublerResponse => {
            let r = run_response(cfg, Mode::Doubler, 0.0)?;
            out.csv("fig12", &response_table(&r));
            out.json("fig12", &response_summary(&r));
            Plot {
                name: "fig12",
                title: "Doubler frequency response at 0 dBm",
                xlabel: "input frequency (Hz)",
                ylabel: "output power (dBm)",
                extra: "",
                series: vec![("fig12.csv".to_string(), 1, 2)],
            }
        }
        Figure::Localization => {
            out.csv("fig1c", &variance_sweep(cfg)?);
            Plot {
                name: "fig1c",
                title: "Phase-error variance versus reflectors",
                xlabel: "reflectors",
                ylabel: "variance (rad^2)",
                extra: "",
                series: vec![("fig1c.csv".to_string(), 1, 2), ("fig1c.csv".to_string(), 1, 3)],
            }
        }
    };
    out.text(&format!("{}.gp", plot.name), plot.script());
    Ok(out)
}
