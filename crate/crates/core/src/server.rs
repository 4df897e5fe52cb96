//! Newline-delimited envelope transport over stdio or TCP.
//!
//! Each connection reads lines on one thread and hands them to a pool of
//! workers; responses are written as they complete, so they may interleave.
//! At end of input the pool drains before the connection closes.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;

use crate::wire::Dispatcher;

pub const DEFAULT_WORKERS: usize = 8;

/// Serves one stream until end of input or a transport failure. Returns the
/// number of requests answered.
pub fn serve_stream<R, W>(dispatcher: &Dispatcher, reader: R, writer: W, workers: usize) -> io::Result<usize>
where
    R: BufRead,
    W: Write + Send,
{
    let writer = Mutex::new(writer);
    let (tx, rx) = mpsc::channel::<String>();
    let rx = Mutex::new(rx);
    let answered = Mutex::new(0usize);
    let failed: Mutex<Option<io::Error>> = Mutex::new(None);

    let read_result = thread::scope(|s| {
        for _ in 0..workers.max(1) {
            s.spawn(|| loop {
                let line = match rx.lock().unwrap_or_else(|e| e.into_inner()).recv() {
                    Ok(l) => l,
                    Err(_) => break,
                };
                let out = dispatcher.dispatch_line(&line).to_line();
                let mut w = writer.lock().unwrap_or_else(|e| e.into_inner());
                let sent = w.write_all(out.as_bytes()).and_then(|_| w.flush());
                match sent {
                    Ok(()) => *answered.lock().unwrap_or_else(|e| e.into_inner()) += 1,
                    Err(e) => {
                        failed.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e);
                    }
                }
            });
        }
        let mut result = Ok(());
        for line in reader.lines() {
            match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => {
                    if tx.send(l).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        drop(tx);
        result
    });
    read_result?;
    if let Some(e) = failed.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(e);
    }
    Ok(answered.into_inner().unwrap_or_else(|e| e.into_inner()))
}

pub fn serve_stdio(dispatcher: &Dispatcher, workers: usize) -> io::Result<usize> {
    let stdin = io::stdin();
    serve_stream(dispatcher, stdin.lock(), io::stdout(), workers)
}

fn serve_connection(dispatcher: &Dispatcher, stream: TcpStream, workers: usize) -> io::Result<usize> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_stream(dispatcher, reader, stream, workers)
}

/// Accepts connections forever, one thread per connection. A failed
/// connection is dropped without affecting the others.
pub fn serve_listener(dispatcher: Dispatcher, listener: TcpListener, workers: usize) -> io::Result<()> {
    let dispatcher = Arc::new(dispatcher);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(_) => continue,
        };
        let d = Arc::clone(&dispatcher);
        thread::spawn(move || {
            let _ = serve_connection(&d, stream, workers);
        });
    }
    Ok(())
}

pub fn serve_tcp(dispatcher: Dispatcher, addr: impl ToSocketAddrs, workers: usize) -> io::Result<()> {
    serve_listener(dispatcher, TcpListener::bind(addr)?, workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::add_tool_spec;
    use crate::kernel::Tea;
    use crate::wire::ResponseEnvelope;
    use std::collections::BTreeSet;

    fn responses(out: &[u8]) -> Vec<ResponseEnvelope> {
        std::str::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    }

    #[test]
    fn pipelined_requests_each_answered_once() {
        let tea = Tea::new();
        tea.register_tool(add_tool_spec("add")).unwrap();
        let d = Dispatcher::with_data_dir(tea, None);
        let input = concat!(
            r#"{"id":"a","op":"tool.list","params":{}}"#, "\n",
            r#"{"id":"b","op":"tool.invoke","params":{"name":"add","args":{"a":1,"b":2}}}"#, "\n",
            r#"{"id":"c","op":"tool.info","params":{"name":"add"}}"#, "\n",
        );
        let mut out = Vec::new();
        let n = serve_stream(&d, input.as_bytes(), &mut out, 4).unwrap();
        assert_eq!(n, 3);
        let ids: BTreeSet<String> = responses(&out).into_iter().map(|r| r.id).collect();
        assert_eq!(ids, ["a", "b", "c"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn malformed_line_does_not_stop_the_stream() {
        let d = Dispatcher::with_data_dir(Tea::new(), None);
        let input = "garbage\n{\"id\":\"2\",\"op\":\"tool.list\",\"params\":{}}\n";
        let mut out = Vec::new();
        serve_stream(&d, input.as_bytes(), &mut out, 1).unwrap();
        let rs = responses(&out);
        assert_eq!(rs.len(), 2);
        assert!(!rs[0].ok);
        assert!(rs[1].ok);
    }
}
