use std::time::{Duration, Instant};

use chainsynth::sandbox::{run_unit_tests, ExecLimits, Sandbox};
use chainsynth_service::{serve, Health, JudgeRequest, JudgeResponse, LimitOverrides, ServiceConfig, ServiceHandle};
use reqwest::blocking::Client;
use reqwest::StatusCode;

fn start(pool: usize, queue_bound: usize) -> ServiceHandle {
    let config = ServiceConfig { pool_size: pool, queue_bound, ..ServiceConfig::default() };
    serve("127.0.0.1:0", config, false).expect("bind")
}

fn client() -> Client {
    Client::builder().timeout(Duration::from_secs(120)).build().unwrap()
}

fn request(code: &str, tests: &[&str]) -> JudgeRequest {
    JudgeRequest { code: code.into(), tests: tests.iter().map(|t| t.to_string()).collect(), limits: None }
}

fn post(c: &Client, svc: &ServiceHandle, body: &JudgeRequest) -> reqwest::blocking::Response {
    c.post(format!("{}/judge", svc.url())).json(body).send().unwrap()
}

/// Posts until the service accepts the request, honouring `Retry-After`.
fn post_with_retry(c: &Client, url: &str, body: &JudgeRequest) -> JudgeResponse {
    loop {
        let resp = c.post(format!("{url}/judge")).json(body).send().unwrap();
        if resp.status() == StatusCode::SERVICE_UNAVAILABLE {
            assert!(resp.headers().contains_key("retry-after"));
            std::thread::sleep(Duration::from_millis(100));
            continue;
        }
        assert_eq!(resp.status(), StatusCode::OK);
        return resp.json().unwrap();
    }
}

#[test]
fn passing_code_earns_reward() {
    let svc = start(2, 0);
    let c = client();
    let r: JudgeResponse = post(
        &c,
        &svc,
        &request("def solve(x):\n    return x * 3\n", &["assert solve(2) == 6", "assert solve(0) == 0"]),
    )
    .json()
    .unwrap();
    assert_eq!((r.reward, r.tests_passed, r.tests_total), (1, 2, 2));
    let r: JudgeResponse =
        post(&c, &svc, &request("def solve(x):\n    return x\n", &["assert solve(2) == 6"])).json().unwrap();
    assert_eq!(r.reward, 0);
    assert!(r.failure_detail.is_some());
    svc.shutdown().unwrap();
}

#[test]
fn invalid_requests_get_400() {
    let svc = start(1, 0);
    let c = client();
    assert_eq!(post(&c, &svc, &request("x = 1", &[])).status(), StatusCode::BAD_REQUEST);
    let big = "#".repeat(256 * 1024 + 1);
    assert_eq!(post(&c, &svc, &request(&big, &["assert True"])).status(), StatusCode::BAD_REQUEST);
    let garbage =
        c.post(format!("{}/judge", svc.url())).header("content-type", "application/json").body("{").send().unwrap();
    assert_eq!(garbage.status(), StatusCode::BAD_REQUEST);
    let body: serde_json::Value = garbage.json().unwrap();
    assert_eq!(body["kind"], "validation");
    svc.shutdown().unwrap();
}

#[test]
fn health_reports_pool_and_queue() {
    let svc = start(3, 0);
    let h: Health = client().get(format!("{}/health", svc.url())).send().unwrap().json().unwrap();
    assert_eq!(h, Health { status: "ok".into(), queue_depth: 0, pool_size: 3 });
    svc.shutdown().unwrap();
}

#[test]
fn full_queue_sheds_load_with_retry_after() {
    let svc = start(1, 1);
    let url = svc.url();
    let busy = JudgeRequest {
        limits: Some(LimitOverrides { wall_clock_ms: Some(1500) }),
        ..request("def solve():\n    while True:\n        pass\n", &["assert solve()"])
    };
    let handles: Vec<_> = (0..2)
        .map(|_| {
            let (url, busy) = (url.clone(), busy.clone());
            std::thread::spawn(move || client().post(format!("{url}/judge")).json(&busy).send().unwrap().status())
        })
        .collect();
    std::thread::sleep(Duration::from_millis(400));
    let resp = post(&client(), &svc, &busy);
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(resp.headers()["retry-after"], "1");
    for h in handles {
        assert_eq!(h.join().unwrap(), StatusCode::OK);
    }
    svc.shutdown().unwrap();
}

#[test]
fn concurrent_requests_do_not_share_workdirs() {
    let svc = start(4, 0);
    let url = svc.url();
    let handles: Vec<_> = (0..4)
        .map(|i| {
            let url = url.clone();
            std::thread::spawn(move || {
                let code = format!(
                    "def solve():\n    with open('shared.txt', 'w') as f:\n        f.write('{i}')\n    with open('shared.txt') as f:\n        return f.read()\n"
                );
                let tests = vec![format!("assert solve() == '{i}'")];
                post_with_retry(&client(), &url, &JudgeRequest { code, tests, limits: None })
            })
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap().reward, 1);
    }
    svc.shutdown().unwrap();
}

#[test]
fn service_matches_library() {
    let svc = start(4, 0);
    let c = client();
    let sandbox = Sandbox::from_env();
    let cases = [
        ("def solve(x):\n    return x + 1\n", vec!["assert solve(1) == 2"]),
        ("def solve(x):\n    return x - 1\n", vec!["assert solve(1) == 2"]),
        ("raise RuntimeError()\n", vec!["assert solve(1) == 2"]),
        ("import os\n", vec!["assert True"]),
        ("def solve(x):\n    return [x] * 3\n", vec!["assert solve(0) == [0, 0, 0]", "assert solve(1) == [1]"]),
    ];
    for (code, tests) in cases {
        let tests: Vec<String> = tests.into_iter().map(String::from).collect();
        let local = run_unit_tests(&sandbox, code, &tests, &ExecLimits::default()).unwrap();
        let remote = post_with_retry(&c, &svc.url(), &JudgeRequest { code: code.into(), tests, limits: None });
        assert_eq!((remote.reward, remote.tests_passed), (local.reward, local.tests_passed), "{code}");
    }
    svc.shutdown().unwrap();
}

#[test]
fn shutdown_drains_in_flight_requests() {
    let svc = start(1, 0);
    let url = svc.url();
    let req = JudgeRequest {
        limits: Some(LimitOverrides { wall_clock_ms: Some(800) }),
        ..request("def solve():\n    while True:\n        pass\n", &["assert solve()"])
    };
    let t = std::thread::spawn(move || client().post(format!("{url}/judge")).json(&req).send().unwrap().status());
    std::thread::sleep(Duration::from_millis(300));
    let started = Instant::now();
    svc.shutdown().unwrap();
    assert_eq!(t.join().unwrap(), StatusCode::OK);
    assert!(started.elapsed() < Duration::from_secs(10));
}

#[test]
fn bind_failure_is_reported() {
    let svc = start(1, 0);
    let err = serve(&svc.addr().to_string(), ServiceConfig::default(), false).err().expect("port in use");
    assert!(err.to_string().contains("cannot bind"));
    svc.shutdown().unwrap();
}
