#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_speared"));
    cmd.env_remove("SPEARED_PORT").env("RUST_LOG", "warn");
    cmd
}

pub fn demo(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../demo")
        .join(name)
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

/// A `speared serve` child process, killed on drop.
pub struct Server {
    pub child: Child,
    pub port: u16,
}

impl Server {
    pub fn start(extra: &[&str]) -> Server {
        let port = free_port();
        let child = bin()
            .arg("serve")
            .args(["--port", &port.to_string()])
            .args(extra)
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let server = Server { child, port };
        let deadline = Instant::now() + Duration::from_secs(20);
        while TcpStream::connect(("127.0.0.1", port)).is_err() {
            assert!(Instant::now() < deadline, "server did not come up");
            std::thread::sleep(Duration::from_millis(20));
        }
        server
    }

    pub fn connect(&self) -> Client {
        Client::connect(self.port)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Blocking line-oriented protocol client.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(port: u16) -> Client {
        let stream = TcpStream::connect(("127.0.0.1", port)).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(20)))
            .unwrap();
        Client {
            reader: BufReader::new(stream.try_clone().unwrap()),
            writer: stream,
        }
    }

    pub fn send_raw(&mut self, frame: &str) {
        self.writer.write_all(frame.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
    }

    pub fn send(&mut self, value: &serde_json::Value) {
        self.send_raw(&value.to_string());
    }

    /// Next frame, verbatim without its newline.
    pub fn recv_raw(&mut self) -> String {
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .expect("frame before timeout");
        assert!(n > 0, "connection closed");
        line.trim_end_matches('\n').to_string()
    }

    pub fn recv(&mut self) -> serde_json::Value {
        serde_json::from_str(&self.recv_raw()).unwrap()
    }

    /// Next frame that is not a topic event.
    pub fn recv_response(&mut self) -> serde_json::Value {
        loop {
            let v = self.recv();
            if v["kind"] != "event" {
                return v;
            }
        }
    }

    /// Frames arriving until the line has been quiet for `quiet`.
    pub fn drain(&mut self, quiet: Duration) -> Vec<String> {
        let stream = self.reader.get_ref();
        stream.set_read_timeout(Some(quiet)).unwrap();
        let mut frames = Vec::new();
        loop {
            let mut line = String::new();
            match self.reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => frames.push(line.trim_end_matches('\n').to_string()),
                Err(_) => break,
            }
        }
        self.reader
            .get_ref()
            .set_read_timeout(Some(Duration::from_secs(20)))
            .unwrap();
        frames
    }

    pub fn call(
        &mut self,
        id: &str,
        channel: &str,
        payload: serde_json::Value,
    ) -> serde_json::Value {
        self.send(
            &serde_json::json!({"kind": "call", "id": id, "channel": channel, "payload": payload}),
        );
        self.recv_response()
    }
}
