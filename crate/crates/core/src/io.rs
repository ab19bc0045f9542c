//! CSV export and import of trajectories, ledgers and switch events.
//!
//! Numbers are written with 17 significant digits so that a write/read round
//! trip reproduces every value exactly.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::control::{SwitchEvent, SwitchKind};
use crate::energy::EnergyLedger;
use crate::excitation::Excitation;
use crate::integrator::{SimState, Trajectory};
use crate::model::{StiffnessPhase, SystemModel};
use crate::Error;

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn phase_code(p: StiffnessPhase) -> &'static str {
    match p {
        StiffnessPhase::Low => "0",
        StiffnessPhase::High => "1",
    }
}

fn parse_phase(s: &str) -> Result<StiffnessPhase, Error> {
    match s {
        "0" | "low" => Ok(StiffnessPhase::Low),
        "1" | "high" => Ok(StiffnessPhase::High),
        other => Err(Error::Csv(format!("bad phase value '{other}'"))),
    }
}

fn parse_num(s: &str) -> Result<f64, Error> {
    s.trim()
        .parse()
        .map_err(|_| Error::Csv(format!("bad number '{s}'")))
}

/// Column names of a trajectory/ledger export.
pub fn trajectory_header(dofs: usize, modes: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=dofs).map(|i| format!("u{i}")));
    h.extend((1..=dofs).map(|i| format!("v{i}")));
    h.push("phase".into());
    for name in ["U", "T", "E", "W", "L", "L_a", "L_s", "L_p"] {
        h.push(name.into());
    }
    h.extend((1..=modes).map(|i| format!("Lm{i}")));
    h
}

/// Indices of the rows written with `stride`; the last sample is always kept.
pub fn strided_rows(len: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut rows: Vec<usize> = (0..len).step_by(stride).collect();
    if len > 0 && rows.last() != Some(&(len - 1)) {
        rows.push(len - 1);
    }
    rows
}

/// Writes one row per kept sample: `t, u, v, phase, U, T, E, W, L, L_a, L_s,
/// L_p, Lm1..`.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    trajectory: &Trajectory,
    ledger: &EnergyLedger,
    stride: usize,
) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    let n = trajectory.dofs();
    w.write_record(trajectory_header(n, ledger.modes())).map_err(csv_err)?;
    for k in strided_rows(trajectory.len(), stride) {
        let mut row = vec![num(trajectory.time(k))];
        row.extend((0..n).map(|d| num(trajectory.displacement(k, d))));
        row.extend((0..n).map(|d| num(trajectory.velocity(k, d))));
        row.push(phase_code(trajectory.phase(k)).into());
        for series in [
            &ledger.potential,
            &ledger.kinetic,
            &ledger.energy,
            &ledger.work,
            &ledger.loss,
            &ledger.pseudo_active,
            &ledger.semi_active,
            &ledger.passive,
        ] {
            row.push(num(series[k]));
        }
        row.extend(ledger.modal.iter().map(|m| num(m[k])));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// A numeric CSV table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Number of `u<i>` columns.
    pub fn dofs(&self) -> usize {
        (1..).take_while(|i| self.column_index(&format!("u{i}")).is_some()).count()
    }

    /// Rebuilds the sampled trajectory (forces from `excitation`).
    pub fn to_trajectory(&self, excitation: &Excitation, events: Vec<SwitchEvent>) -> Result<Trajectory, Error> {
        let n = self.dofs();
        let missing = |c: &str| Error::Csv(format!("missing column '{c}'"));
        let ti = self.column_index("t").ok_or_else(|| missing("t"))?;
        let pi = self.column_index("phase").ok_or_else(|| missing("phase"))?;
        let ui: Vec<usize> = (1..=n).map(|i| self.column_index(&format!("u{i}")).unwrap()).collect();
        let vi = (1..=n)
            .map(|i| self.column_index(&format!("v{i}")).ok_or_else(|| missing(&format!("v{i}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut traj = Trajectory::new(n);
        for row in &self.rows {
            let t = row[ti];
            let u = DVector::from_iterator(n, ui.iter().map(|&i| row[i]));
            let v = DVector::from_iterator(n, vi.iter().map(|&i| row[i]));
            let phase = if row[pi] == 0.0 { StiffnessPhase::Low } else { StiffnessPhase::High };
            traj.push(t, &u, &v, &excitation.force_at(t, n), phase);
        }
        traj.set_events(events);
        Ok(traj)
    }
}

pub fn read_csv_table<R: Read>(input: R) -> Result<CsvTable, Error> {
    let mut r = csv::Reader::from_reader(input);
    let columns: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(rec.iter().map(|f| match f {
            "low" => Ok(0.0),
            "high" => Ok(1.0),
            other => parse_num(other),
        }).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(CsvTable { columns, rows })
}

pub fn events_header(dofs: usize) -> Vec<String> {
    let mut h: Vec<String> = ["time", "kind", "c", "c_dot", "extracted", "phase_before", "phase_after"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["u_before", "v_before", "u_after", "v_after"] {
        h.extend((1..=dofs).map(|i| format!("{prefix}{i}")));
    }
    h
}

pub fn write_events_csv<W: Write>(out: W, events: &[SwitchEvent], dofs: usize) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(events_header(dofs)).map_err(csv_err)?;
    for e in events {
        let mut row = vec![
            num(e.time),
            match e.kind {
                SwitchKind::Increase => "increase".into(),
                SwitchKind::Decrease => "decrease".into(),
            },
            num(e.observation_value),
            num(e.observation_rate),
            num(e.extracted_energy),
            phase_code(e.state_before.phase).into(),
            phase_code(e.state_after.phase).into(),
        ];
        for x in [&e.state_before.u, &e.state_before.v, &e.state_after.u, &e.state_after.v] {
            row.extend(x.iter().map(|&y| num(y)));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn read_events_csv<R: Read>(input: R, model: &SystemModel) -> Result<Vec<SwitchEvent>, Error> {
    let n = model.dofs();
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != events_header(n) {
        return Err(Error::Csv(format!("event file does not match a {n}-DoF model")));
    }
    let mut events = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| parse_num(&rec[i]);
        let vec_at = |start: usize| -> Result<DVector<f64>, Error> {
            let vals = (start..start + n).map(f).collect::<Result<Vec<_>, _>>()?;
            Ok(DVector::from_vec(vals))
        };
        let kind = match &rec[1] {
            "increase" => SwitchKind::Increase,
            "decrease" => SwitchKind::Decrease,
            other => return Err(Error::Csv(format!("bad event kind '{other}'"))),
        };
        let t = f(0)?;
        let before = SimState::new(t, vec_at(7)?, vec_at(7 + n)?, parse_phase(&rec[5])?, model);
        let after = SimState::new(t, vec_at(7 + 2 * n)?, vec_at(7 + 3 * n)?, parse_phase(&rec[6])?, model);
        events.push(SwitchEvent {
            time: t,
            kind,
            observation_value: f(2)?,
            observation_rate: f(3)?,
            state_before: before,
            state_after: after,
            extracted_energy: f(4)?,
        });
    }
    Ok(events)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, Error> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, Error> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
}

pub fn emit_csv(path: &Path, trajectory: &Trajectory, ledger: &EnergyLedger, stride: usize) -> Result<(), Error> {
    write_trajectory_csv(create(path)?, trajectory, ledger, stride)
}

pub fn emit_events_csv(path: &Path, events: &[SwitchEvent], dofs: usize) -> Result<(), Error> {
    write_events_csv(create(path)?, events, dofs)
}

pub fn load_csv_table(path: &Path) -> Result<CsvTable, Error> {
    read_csv_table(open(path)?)
}

pub fn load_events_csv(path: &Path, model: &SystemModel) -> Result<Vec<SwitchEvent>, Error> {
    read_events_csv(open(path)?, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::build_ledger;
    use crate::scenario::{preset, run_scenario};

    #[test]
    fn empty_trajectory_gives_header_only() {
        let traj = Trajectory::new(2);
        let ledger = EnergyLedger {
            primary_mode: 1,
            times: vec![],
            potential: vec![],
            kinetic: vec![],
            energy: vec![],
            work: vec![],
            loss: vec![],
            pseudo_active: vec![],
            dissipation: vec![],
            modal: vec![vec![], vec![]],
            passive: vec![],
            semi_active: vec![],
            marks: vec![],
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, &ledger, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,u1,u2,v1,v2,phase,U,T,E,W,L,L_a,L_s,L_p,Lm1,Lm2\n");
    }

    #[test]
    fn strided_rows_keep_last() {
        assert_eq!(strided_rows(0, 3), Vec::<usize>::new());
        assert_eq!(strided_rows(7, 3), vec![0, 3, 6]);
        assert_eq!(strided_rows(8, 3), vec![0, 3, 6, 7]);
        assert_eq!(strided_rows(3, 0), vec![0, 1, 2]);
    }

    #[test]
    fn round_trip_rebuilds_identical_ledger() {
        let s = preset("serial-local-lock").unwrap();
        let out = run_scenario(&s).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &out.trajectory, &out.ledger, 1).unwrap();
        let mut ev = Vec::new();
        write_events_csv(&mut ev, out.trajectory.events(), 2).unwrap();

        let table = read_csv_table(buf.as_slice()).unwrap();
        assert_eq!(table.column("t").unwrap(), out.trajectory.times());
        assert_eq!(table.column("L_a").unwrap(), out.ledger.pseudo_active);
        let events = read_events_csv(ev.as_slice(), &s.model).unwrap();
        assert_eq!(events, out.trajectory.events());
        let traj = table.to_trajectory(&s.excitation, events).unwrap();
        assert_eq!(traj, out.trajectory);
        let ledger = build_ledger(&s.model, &traj, &s.excitation, 1).unwrap();
        assert_eq!(ledger, out.ledger);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_csv_table("t,u1\n0.0,abc\n".as_bytes()).is_err());
        let model = crate::model::identify_reference_parameters();
        assert!(read_events_csv("time,kind\n".as_bytes(), &model).is_err());
    }
}
