use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use tea_core::builtins::add_tool_spec;
use tea_core::server::serve_listener;
use tea_core::value::{canonical_string, map_of};
use tea_core::{Dispatcher, ResponseEnvelope, Tea, Value};

fn start(tea: Tea) -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || serve_listener(Dispatcher::with_data_dir(tea, None), listener, 4));
    addr
}

fn line(id: &str, op: &str, params: Value) -> String {
    let mut s = canonical_string(&map_of([("id", Value::from(id)), ("op", Value::from(op)), ("params", params)])).unwrap();
    s.push('\n');
    s
}

#[test]
fn fifty_connections_record_every_trace() {
    let tea = Tea::new();
    tea.register_tool(add_tool_spec("add")).unwrap();
    let handle = tea.session_open("client", "load");
    let addr = start(tea.clone());

    const CONNS: usize = 50;
    const PER: usize = 10;
    let ids: Vec<BTreeSet<String>> = thread::scope(|s| {
        let workers: Vec<_> = (0..CONNS)
            .map(|c| {
                let sid = handle.session_id.clone();
                s.spawn(move || {
                    let mut stream = TcpStream::connect(addr).unwrap();
                    let mut batch = String::new();
                    for i in 0..PER {
                        let obs = map_of([("conn", c as i64), ("i", i as i64)]);
                        batch.push_str(&line(
                            &format!("{c}-{i}"),
                            "trace.record",
                            map_of([("session_id", Value::from(sid.as_str())), ("observation", obs)]),
                        ));
                    }
                    stream.write_all(batch.as_bytes()).unwrap();
                    stream.shutdown(std::net::Shutdown::Write).unwrap();
                    let mut seen = BTreeSet::new();
                    for l in BufReader::new(stream).lines() {
                        let r: ResponseEnvelope = serde_json::from_str(&l.unwrap()).unwrap();
                        assert!(r.ok, "{r:?}");
                        assert!(seen.insert(r.id));
                    }
                    seen
                })
            })
            .collect();
        workers.into_iter().map(|w| w.join().unwrap()).collect()
    });

    for (c, seen) in ids.iter().enumerate() {
        let want: BTreeSet<String> = (0..PER).map(|i| format!("{c}-{i}")).collect();
        assert_eq!(*seen, want);
    }
    let traces = tea.sessions().all_traces();
    assert_eq!(traces.len(), CONNS * PER);
    let indices: Vec<u64> = traces.iter().map(|t| t.index).collect::<BTreeSet<_>>().into_iter().collect();
    assert_eq!(indices, (1..=(CONNS * PER) as u64).collect::<Vec<_>>());
}

#[test]
fn a_bad_client_does_not_disturb_others() {
    let tea = Tea::new();
    tea.register_tool(add_tool_spec("add")).unwrap();
    let addr = start(tea);

    let mut rude = TcpStream::connect(addr).unwrap();
    rude.write_all(b"{not json\n").unwrap();
    drop(rude);

    let mut stream = TcpStream::connect(addr).unwrap();
    let args = map_of([("name", Value::from("add")), ("args", map_of([("a", 2i64), ("b", 3i64)]))]);
    stream.write_all(line("x", "tool.invoke", args).as_bytes()).unwrap();
    stream.shutdown(std::net::Shutdown::Write).unwrap();
    let mut out = String::new();
    BufReader::new(stream).read_line(&mut out).unwrap();
    let r: ResponseEnvelope = serde_json::from_str(&out).unwrap();
    assert_eq!(r.into_result().unwrap().get("output"), Some(&Value::Int(5)));
}
