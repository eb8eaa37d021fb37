use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;

use super::{AdapterError, AdapterRole, Backend};

const STDERR_TAIL_BYTES: usize = 2048;

/// Runs a shell command per request: request JSON on stdin, artifact JSON on
/// stdout. The role name is exported as `ADAPTER_ROLE`.
#[derive(Debug, Clone)]
pub struct SubprocessBackend {
    command: String,
    timeout: Duration,
}

impl SubprocessBackend {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        Self {
            command: command.into(),
            timeout,
        }
    }
}

fn tail(bytes: &[u8]) -> String {
    let text = String::from_utf8_lossy(bytes);
    let text = text.trim_end();
    let mut start = text.len().saturating_sub(STDERR_TAIL_BYTES);
    while !text.is_char_boundary(start) {
        start += 1;
    }
    text[start..].to_string()
}

impl Backend for SubprocessBackend {
    fn invoke(&self, role: AdapterRole, request: &Value) -> Result<Value, AdapterError> {
        let io_err = |source| AdapterError::Io { role, source };
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .env("ADAPTER_ROLE", role.as_str())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(io_err)?;

        let payload = serde_json::to_vec(request).expect("JSON values always serialize");
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(&payload);
        });
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let mut stderr = child.stderr.take().expect("stderr is piped");
        let out_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            stdout.read_to_end(&mut buf).map(|_| buf)
        });
        let err_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let started = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait().map_err(io_err)? {
                break status;
            }
            if started.elapsed() >= self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(AdapterError::Timeout {
                    role,
                    after: self.timeout,
                });
            }
            thread::sleep(Duration::from_millis(5));
        };

        let _ = writer.join();
        let stdout = out_reader
            .join()
            .expect("stdout reader panicked")
            .map_err(io_err)?;
        let stderr = err_reader.join().expect("stderr reader panicked");

        if !status.success() {
            return Err(AdapterError::Failure {
                role,
                exit_code: status.code(),
                stderr_tail: tail(&stderr),
            });
        }
        serde_json::from_slice(&stdout).map_err(|e| AdapterError::SchemaViolation {
            role,
            detail: format!("stdout is not JSON: {e}"),
        })
    }

    fn describe(&self) -> String {
        format!("subprocess `{}`", self.command)
    }
}
