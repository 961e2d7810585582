//! Hosts client-driven sessions over TCP and plays one episode against it
//! from a client thread.
//!
//! ```bash
//! cargo run --example session_server
//! ```

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::mpsc;
use std::thread;

use shapeshift::episode::EpisodeConfig;
use shapeshift::generator::ScenarioConfig;
use shapeshift::geometry::{Board, GridSpec};
use shapeshift::session::{serve_tcp, Session};

fn main() -> shapeshift::Result<()> {
    let board = Board::with_builtin(GridSpec::default())?;
    let session = Session::new(board, ScenarioConfig::default(), EpisodeConfig::default(), 0);
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || serve_tcp(session, "127.0.0.1:0", move |addr| tx.send(addr).unwrap()));
    let addr = rx.recv().expect("server bound");

    let stream = TcpStream::connect(addr)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let requests = [
        r#"{"op":"reset","scenario_seed":7,"mode":"dynamic"}"#,
        r#"{"op":"step","action":"<answer>up</answer>"}"#,
        r#"{"op":"step","action":"no tags here"}"#,
        r#"{"op":"step","action":"<answer>double_size</answer>"}"#,
    ];
    for req in requests {
        writeln!(writer, "{req}")?;
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let reply: serde_json::Value = serde_json::from_str(&line)?;
        println!(
            "{req}\n  -> reward {} done {} info {}",
            reply["reward"], reply["done"], reply["info"]
        );
    }
    Ok(())
}
