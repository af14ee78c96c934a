use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use troppo_core::geodesy::{great_circle_distance, EarthModel, GeoPoint};
use troppo_core::terrain::{ElevationClient, TerrainError};

/// Serve one request, answering with `f(request_body)`; returns the URL.
fn serve_once(f: impl FnOnce(serde_json::Value) -> (u16, String) + Send + 'static) -> (String, thread::JoinHandle<serde_json::Value>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/api/v1/lookup", listener.local_addr().unwrap());
    let h = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let (status, resp) = f(req.clone());
        let mut s = stream;
        write!(
            s,
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}",
            resp.len()
        )
        .unwrap();
        req
    });
    (url, h)
}

fn endpoints() -> (GeoPoint, GeoPoint) {
    (GeoPoint::new(45.6167, 8.3667).unwrap(), GeoPoint::new(44.7547, 8.0031).unwrap())
}

#[test]
fn fetch_profile_builds_samples_from_response() {
    let (url, h) = serve_once(|req| {
        let n = req["locations"].as_array().unwrap().len();
        let results: Vec<_> = (0..n).map(|i| serde_json::json!({"elevation": 100.0 + i as f64})).collect();
        (200, serde_json::json!({ "results": results }).to_string())
    });
    let (a, b) = endpoints();
    let e = EarthModel::default();
    let p = ElevationClient::new(url).fetch_profile(&a, &b, 5, &e).unwrap();
    let req = h.join().unwrap();
    let locs = req["locations"].as_array().unwrap();
    assert_eq!(locs.len(), 5);
    assert_eq!(locs[0]["latitude"], 45.6167);
    assert_eq!(locs[4]["longitude"], 8.0031);
    let s = p.samples();
    assert_eq!(s.len(), 5);
    assert_eq!(s[0].distance_km, 0.0);
    assert!((p.total_distance_km() - great_circle_distance(&a, &b, &e)).abs() < 1e-9);
    assert_eq!(s[3].elevation_m, 103.0);
}

#[test]
fn short_response_is_an_error() {
    let (url, h) = serve_once(|_| (200, r#"{"results":[{"elevation":1}]}"#.into()));
    let (a, b) = endpoints();
    let err = ElevationClient::new(url).fetch_profile(&a, &b, 4, &EarthModel::default()).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, TerrainError::ShortResponse { expected: 4, got: 1 }), "{err}");
}

#[test]
fn malformed_and_failed_responses() {
    let (url, h) = serve_once(|_| (200, "not json".into()));
    let (a, b) = endpoints();
    let err = ElevationClient::new(url).fetch_profile(&a, &b, 3, &EarthModel::default()).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, TerrainError::Malformed(_)));

    let (url, h) = serve_once(|_| (500, "{}".into()));
    let err = ElevationClient::new(url).fetch_profile(&a, &b, 3, &EarthModel::default()).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, TerrainError::Http(_)));
}

#[test]
fn unreachable_service_is_an_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let (a, b) = endpoints();
    let err = ElevationClient::new(format!("http://127.0.0.1:{port}/x"))
        .fetch_profile(&a, &b, 3, &EarthModel::default())
        .unwrap_err();
    assert!(matches!(err, TerrainError::Http(_)));
}
