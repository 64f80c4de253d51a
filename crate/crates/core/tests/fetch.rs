use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;

use breathline::audio_io::{fetch_manifest_sources, Manifest};
use sha2::{Digest, Sha256};

const BODY: &[u8] = b"RIFF-not-really-a-wav-but-bytes-are-bytes";

/// Serves `/good.wav` with [`BODY`] and 404s everything else, for `n` requests.
fn serve(n: usize) -> (String, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request = String::new();
            reader.read_line(&mut request).unwrap();
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
            }
            let path = request.split_whitespace().nth(1).unwrap_or("");
            let (status, body): (&str, &[u8]) = if path == "/good.wav" {
                ("200 OK", BODY)
            } else {
                ("404 Not Found", b"missing")
            };
            write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            )
            .unwrap();
            stream.write_all(body).unwrap();
        }
    });
    (base, handle)
}

fn manifest(base: &str) -> Manifest {
    Manifest::parse(&format!(
        "id,source,label,speaker_id,outlet,duration_ms,annotation_path\n\
         a,{base}/good.wav,real,,o1,,\n\
         b,{base}/gone.wav,fake,,o2,,\n\
         c,local.wav,fake,,o2,,\n"
    ))
    .unwrap()
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn fetch_records_success_and_failure() {
    let (base, server) = serve(2);
    let dir = tempfile::tempdir().unwrap();
    let report = fetch_manifest_sources(&manifest(&base), dir.path()).unwrap();
    server.join().unwrap();

    assert_eq!(report.len(), 2, "local sources are not fetched");
    assert!(report[0].is_ok());
    assert_eq!(report[0].sha256.as_deref(), Some(sha256_hex(BODY).as_str()));
    assert_eq!(report[0].bytes, Some(BODY.len() as u64));
    assert_eq!(std::fs::read(dir.path().join("a.wav")).unwrap(), BODY);

    assert_eq!(report[1].status, "failed(404)");
    assert_eq!(report[1].sha256, None);
    assert!(!dir.path().join("b.wav").exists());
}

#[test]
fn refetch_reproduces_hash() {
    let (base, server) = serve(4);
    let m = manifest(&base);
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let a = fetch_manifest_sources(&m, first.path()).unwrap();
    let b = fetch_manifest_sources(&m, second.path()).unwrap();
    server.join().unwrap();
    assert_eq!(a, b);
}

#[test]
fn manifest_without_urls_is_a_no_op() {
    let m = Manifest::parse("id,source,label,speaker_id,outlet,duration_ms,annotation_path\nc,x.wav,real,,o,,\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("never-created");
    assert!(fetch_manifest_sources(&m, &target).unwrap().is_empty());
    assert!(!target.exists());
}
