//! Reference external scorer: serves a built-in stage model over the
//! line protocol on stdin/stdout.
//!
//! Usage: `reference-scorer --model stage1.json`

use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use launder_core::patch::Patch;
use launder_core::scorers::protocol::{format_score, read_patch_frame, HELLO};
use launder_core::scorers::ScorerModel;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = match args.as_slice() {
        [flag, path] if flag == "--model" => path,
        _ => {
            eprintln!("usage: reference-scorer --model FILE");
            return ExitCode::from(1);
        }
    };
    let model = match ScorerModel::load(path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match serve(&model) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn serve(model: &ScorerModel) -> launder_core::Result<()> {
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = BufWriter::new(io::stdout().lock());
    let io_err = |e: io::Error| launder_core::Error::Codec(format!("stdout: {e}"));
    writeln!(out, "{HELLO}").and_then(|_| out.flush()).map_err(io_err)?;
    while let Some(pixels) = read_patch_frame(&mut input)? {
        let score = model.score_patch(&Patch { pixels, origin: (0, 0) })?;
        out.write_all(format_score(score).as_bytes())
            .and_then(|_| out.flush())
            .map_err(io_err)?;
    }
    Ok(())
}
