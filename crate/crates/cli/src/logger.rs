//! JSON-lines logging on stderr.

use std::io::Write;

use log::{LevelFilter, Log, Metadata, Record};
use serde::Serialize;

#[derive(Serialize)]
struct Line<'a> {
    level: &'a str,
    target: &'a str,
    message: String,
}

pub struct JsonLogger {
    level: LevelFilter,
}

impl Log for JsonLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let line = Line {
            level: record.level().as_str(),
            target: record.target(),
            message: record.args().to_string(),
        };
        if let Ok(json) = serde_json::to_string(&line) {
            let _ = writeln!(std::io::stderr().lock(), "{json}");
        }
    }

    fn flush(&self) {
        let _ = std::io::stderr().flush();
    }
}

/// Installs the logger once; later calls only adjust the level.
pub fn init(level: LevelFilter) {
    let _ = log::set_boxed_logger(Box::new(JsonLogger { level }));
    log::set_max_level(level);
}
