use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use skillstack_core::control::log::{csv_header, read_log, record_to_csv};
use skillstack_core::sim::RobotState;

use crate::{EXIT_FAILURE, EXIT_OK};

pub(crate) fn run(path: &Path, csv: bool) -> ExitCode {
    let log = match read_log(path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    if log.is_truncated() {
        eprintln!(
            "warning: {}: {} trailing bytes ignored, {} whole records recovered",
            path.display(),
            log.trailing_bytes,
            log.records.len()
        );
    }
    let out = io::stdout().lock();
    let mut out = BufWriter::new(out);
    let written = if csv {
        write_csv(&mut out, &log.records)
    } else {
        write_text(&mut out, log.header.robot_id, &log.records)
    };
    match written.and_then(|_| out.flush()) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn write_csv(out: &mut impl Write, records: &[RobotState]) -> io::Result<()> {
    writeln!(out, "{}", csv_header())?;
    for r in records {
        writeln!(out, "{}", record_to_csv(r))?;
    }
    Ok(())
}

fn write_text(out: &mut impl Write, robot_id: u16, records: &[RobotState]) -> io::Result<()> {
    writeln!(out, "robot {robot_id}: {} records", records.len())?;
    for r in records {
        let p = &r.ee_pose.position;
        writeln!(
            out,
            "tick {:>8} skill {:>4} {:<10} q [{}] ee [{:.4} {:.4} {:.4}] grip {:.4}",
            r.tick,
            r.active_skill_id.unwrap_or(0),
            format!("{:?}", r.skill_phase),
            r.q.iter()
                .map(|x| format!("{x:.4}"))
                .collect::<Vec<_>>()
                .join(" "),
            p[0],
            p[1],
            p[2],
            r.gripper_width
        )?;
    }
    Ok(())
}
