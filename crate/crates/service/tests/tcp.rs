use std::time::Duration;

use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpListener, TcpStream};

use speared_core::sim::{load_scene, Simulator};
use speared_core::ArmProfile;
use speared_service::{serve, Envelope, Hub, Kind, ServerConfig, Stepping};

const SCENE: &str = include_str!("../../../demo/yellow_cube.json");

struct Client {
    lines: tokio::io::Lines<BufReader<OwnedReadHalf>>,
    write: OwnedWriteHalf,
}

impl Client {
    async fn connect(port: u16) -> Client {
        let stream = TcpStream::connect(("127.0.0.1", port)).await.unwrap();
        let (read, write) = stream.into_split();
        Client {
            lines: BufReader::new(read).lines(),
            write,
        }
    }

    async fn send_raw(&mut self, bytes: &[u8]) {
        self.write.write_all(bytes).await.unwrap();
    }

    async fn send(&mut self, env: &Envelope) {
        let mut frame = env.to_frame();
        frame.push('\n');
        self.send_raw(frame.as_bytes()).await;
    }

    async fn recv(&mut self) -> Envelope {
        let line = tokio::time::timeout(Duration::from_secs(10), self.lines.next_line())
            .await
            .expect("frame within timeout")
            .unwrap()
            .expect("connection open");
        Envelope::from_frame(&line).unwrap()
    }

    /// Next envelope that is not a topic event.
    async fn recv_response(&mut self) -> Envelope {
        loop {
            let env = self.recv().await;
            if env.kind != Kind::Event {
                return env;
            }
        }
    }
}

async fn start(stepping: Stepping, config: ServerConfig) -> u16 {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let port = listener.local_addr().unwrap().port();
    let sim = Simulator::new(ArmProfile::default(), load_scene(SCENE).unwrap());
    tokio::spawn(serve(listener, Hub::new(sim, stepping), config));
    port
}

#[tokio::test]
async fn malformed_frames_keep_the_connection() {
    let port = start(Stepping::Realtime, ServerConfig::default()).await;
    let mut c = Client::connect(port).await;
    let junk: [&[u8]; 5] = [
        b"not json\n",
        b"{\"kind\":\"call\"\n",
        b"\xff\xfe\x00garbage\n",
        b"[]\n",
        b"{\"kind\":\"shout\",\"id\":\"k\",\"channel\":\"x\",\"payload\":{}}\n",
    ];
    for frame in junk {
        c.send_raw(frame).await;
        let env = c.recv().await;
        assert_eq!(env.kind, Kind::Error);
        assert_eq!(env.error_code(), Some("bad_payload"));
    }
    c.send_raw(b"\n   \n").await;
    c.send(&Envelope::call("ok", "service:state.idle", json!({})))
        .await;
    let env = c.recv().await;
    assert_eq!(env.kind, Kind::Reply);
    assert_eq!(env.id, "ok");
    assert_eq!(env.payload["idle"], json!(true));
}

#[tokio::test]
async fn realtime_execution_reaches_idle() {
    let config = ServerConfig {
        tick: Duration::from_millis(5),
        ..ServerConfig::default()
    };
    let port = start(Stepping::Realtime, config).await;
    let mut c = Client::connect(port).await;
    c.send(&Envelope::call(
        "sp",
        "service:physics",
        json!({"action": "set_speed", "factor": 8}),
    ))
    .await;
    assert_eq!(c.recv().await.payload["speed_factor"], json!(8.0));
    c.send(&Envelope::subscribe("idle", "topic:idle")).await;
    assert_eq!(c.recv().await.payload["idle"], json!(true));
    c.send(&Envelope::call(
        "run",
        "service:execute",
        json!({"program": "move 200 0 330\nmove 0 200 330"}),
    ))
    .await;
    assert_eq!(c.recv().await.kind, Kind::Reply);
    let mut states = Vec::new();
    while states.len() < 2 {
        let env = c.recv().await;
        assert_eq!(env.channel, "topic:idle");
        states.push(env.payload["idle"].clone());
    }
    assert_eq!(states, [json!(false), json!(true)]);
}

#[tokio::test]
async fn clients_share_the_code_store() {
    let port = start(Stepping::Lockstep { dt: 0.05 }, ServerConfig::default()).await;
    let mut a = Client::connect(port).await;
    let mut b = Client::connect(port).await;
    b.send(&Envelope::subscribe("code", "topic:code")).await;
    assert_eq!(b.recv().await.payload["revision"], json!(0));

    let program =
        json!({"name": "shared", "commands": [{"type": "move", "x": 200.0, "y": 0.0, "z": 330.0}]});
    a.send(&Envelope::call(
        "s",
        "service:code.store",
        json!({"program": program, "expected_revision": 0, "client": "a"}),
    ))
    .await;
    assert_eq!(a.recv().await.payload["revision"], json!(1));
    let event = b.recv().await;
    assert_eq!(event.payload["program"], program);
    assert_eq!(event.payload["last_writer"], json!("a"));

    drop(a);
    let mut c = Client::connect(port).await;
    c.send(&Envelope::call("l", "service:code.load", json!({})))
        .await;
    let loaded = c.recv_response().await;
    assert_eq!(loaded.payload["revision"], json!(1));
    assert_eq!(loaded.payload["program"], program);

    c.send(&Envelope::call(
        "x",
        "service:execute",
        json!({"use_stored": true}),
    ))
    .await;
    let reply = c.recv_response().await;
    assert_eq!(
        reply.payload,
        json!({"program": "shared", "commands": 1})
            .as_object()
            .unwrap()
            .clone()
    );
}

#[tokio::test]
async fn slow_subscriber_overflows() {
    let config = ServerConfig {
        queue_limit: 0,
        ..ServerConfig::default()
    };
    let port = start(Stepping::Lockstep { dt: 0.05 }, config).await;
    let mut c = Client::connect(port).await;
    c.send(&Envelope::subscribe("j", "topic:joint_states"))
        .await;
    let env = c.recv().await;
    assert_eq!(env.error_code(), Some("overflow"));
    assert_eq!(env.id, "j");
    // Services still work after the subscription is gone.
    c.send(&Envelope::call("q", "service:state.idle", json!({})))
        .await;
    let reply = c.recv().await;
    assert_eq!(reply.kind, Kind::Reply);
    assert_eq!(reply.payload.get("idle"), Some(&Value::Bool(true)));
}
