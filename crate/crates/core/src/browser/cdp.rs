//! Headless Chrome over the DevTools remote-debugging protocol.

use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use base64::Engine;
use image::RgbaImage;
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};
use url::Url;

use super::{raster, BrowserError, ElementGeometry, RenderEngine, Viewport, LOAD_TIMEOUT};

const XPATH_JS: &str = r#"const __vgsXPath = (el) => {
  const parts = [];
  for (let n = el; n && n.nodeType === 1; n = n.parentElement) {
    const name = n.localName;
    const same = n.parentElement ? Array.from(n.parentElement.children).filter(c => c.localName === name) : [n];
    parts.unshift(same.length > 1 ? `${name}[${same.indexOf(n) + 1}]` : name);
  }
  return '/' + parts.join('/');
};"#;

const GEOMETRY_JS: &str = r#"JSON.stringify(Array.from(document.querySelectorAll('*')).map(el => {
  const r = el.getBoundingClientRect();
  return {xpath: __vgsXPath(el), tag: el.localName, rect: {x: r.left + window.scrollX, y: r.top + window.scrollY, w: r.width, h: r.height}};
}))"#;

const SNAPSHOT_JS: &str =
    "(document.doctype ? '<!DOCTYPE ' + document.doctype.name + '>' : '') + document.documentElement.outerHTML";

const HEIGHT_JS: &str =
    "Math.max(document.documentElement.scrollHeight, document.body ? document.body.scrollHeight : 0)";

/// Locates a Chrome or Chromium binary via `VGS_CHROME` or `PATH`.
pub fn find_chrome() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("VGS_CHROME") {
        return Some(PathBuf::from(p));
    }
    let path = std::env::var_os("PATH")?;
    for dir in std::env::split_paths(&path) {
        for name in ["google-chrome", "google-chrome-stable", "chromium", "chromium-browser", "chrome"] {
            let candidate = dir.join(name);
            if candidate.is_file() {
                return Some(candidate);
            }
        }
    }
    None
}

pub struct ChromeEngine {
    child: Child,
    profile: PathBuf,
    socket: WebSocket<MaybeTlsStream<TcpStream>>,
    next_id: u64,
    events: Vec<Value>,
}

fn protocol(e: impl std::fmt::Display) -> BrowserError {
    BrowserError::Protocol(e.to_string())
}

impl ChromeEngine {
    pub fn launch(url: &Url, viewport: Viewport) -> Result<ChromeEngine, BrowserError> {
        let binary = find_chrome().ok_or_else(|| protocol("no Chrome binary found (set VGS_CHROME)"))?;
        let stamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default().as_nanos();
        let profile = std::env::temp_dir().join(format!("vgs-chrome-{}-{stamp}", std::process::id()));
        std::fs::create_dir_all(&profile).map_err(protocol)?;
        let child = Command::new(&binary)
            .args([
                "--headless=new",
                "--disable-gpu",
                "--no-sandbox",
                "--hide-scrollbars",
                "--remote-debugging-port=0",
                &format!("--user-data-dir={}", profile.display()),
                &format!("--window-size={},{}", viewport.width, viewport.height),
                "about:blank",
            ])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(protocol)?;
        let port = wait_for_port(&profile)?;
        let ws_url = page_socket_url(port)?;
        let (socket, _) = tungstenite::connect(ws_url.as_str()).map_err(protocol)?;
        if let MaybeTlsStream::Plain(s) = socket.get_ref() {
            s.set_read_timeout(Some(Duration::from_secs(1))).map_err(protocol)?;
        }
        let mut engine = ChromeEngine { child, profile, socket, next_id: 0, events: Vec::new() };
        engine.call("Page.enable", json!({}))?;
        engine.call(
            "Emulation.setDeviceMetricsOverride",
            json!({"width": viewport.width, "height": viewport.height, "deviceScaleFactor": 1, "mobile": false}),
        )?;
        engine.navigate(url)?;
        engine.evaluate(XPATH_JS)?;
        Ok(engine)
    }

    fn navigate(&mut self, url: &Url) -> Result<(), BrowserError> {
        self.events.clear();
        let res = self.call("Page.navigate", json!({"url": url.as_str()}))?;
        if let Some(err) = res.get("errorText").and_then(Value::as_str) {
            return Err(BrowserError::NavigationFailed { url: url.to_string(), reason: err.to_string() });
        }
        let deadline = Instant::now() + LOAD_TIMEOUT;
        while !self.events.iter().any(|e| e["method"] == "Page.loadEventFired") && Instant::now() < deadline {
            self.pump()?;
        }
        let status = self.evaluate("(performance.getEntriesByType('navigation')[0] || {}).responseStatus || 0")?;
        if status.as_u64().unwrap_or(0) >= 400 {
            return Err(BrowserError::NavigationFailed { url: url.to_string(), reason: format!("HTTP {status}") });
        }
        Ok(())
    }

    /// Reads one message if available, recording events.
    fn pump(&mut self) -> Result<Option<Value>, BrowserError> {
        match self.socket.read() {
            Ok(Message::Text(t)) => {
                let v: Value = serde_json::from_str(&t).map_err(protocol)?;
                if v.get("method").is_some() {
                    self.events.push(v);
                    Ok(None)
                } else {
                    Ok(Some(v))
                }
            }
            Ok(_) => Ok(None),
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
            {
                Ok(None)
            }
            Err(e) => Err(protocol(e)),
        }
    }

    fn call(&mut self, method: &str, params: Value) -> Result<Value, BrowserError> {
        self.next_id += 1;
        let id = self.next_id;
        let msg = json!({"id": id, "method": method, "params": params}).to_string();
        self.socket.send(Message::Text(msg)).map_err(protocol)?;
        let deadline = Instant::now() + LOAD_TIMEOUT;
        while Instant::now() < deadline {
            if let Some(v) = self.pump()? {
                if v["id"].as_u64() == Some(id) {
                    if let Some(err) = v.get("error") {
                        return Err(protocol(format!("{method}: {err}")));
                    }
                    return Ok(v["result"].clone());
                }
            }
        }
        Err(BrowserError::RenderTimeout(format!("{method} did not answer")))
    }

    fn evaluate(&mut self, expr: &str) -> Result<Value, BrowserError> {
        let res = self.call("Runtime.evaluate", json!({"expression": expr, "returnByValue": true}))?;
        if let Some(ex) = res.get("exceptionDetails") {
            return Err(protocol(format!("script failed: {ex}")));
        }
        Ok(res["result"]["value"].clone())
    }
}

fn wait_for_port(profile: &Path) -> Result<u16, BrowserError> {
    let file = profile.join("DevToolsActivePort");
    let deadline = Instant::now() + LOAD_TIMEOUT;
    while Instant::now() < deadline {
        if let Ok(text) = std::fs::read_to_string(&file) {
            if let Some(port) = text.lines().next().and_then(|l| l.trim().parse().ok()) {
                return Ok(port);
            }
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    Err(BrowserError::RenderTimeout("Chrome did not open a debugging port".into()))
}

fn page_socket_url(port: u16) -> Result<String, BrowserError> {
    let list: Value = reqwest::blocking::get(format!("http://127.0.0.1:{port}/json/list"))
        .and_then(|r| r.json())
        .map_err(protocol)?;
    list.as_array()
        .and_then(|targets| targets.iter().find(|t| t["type"] == "page"))
        .and_then(|t| t["webSocketDebuggerUrl"].as_str())
        .map(str::to_string)
        .ok_or_else(|| protocol("no page target"))
}

impl RenderEngine for ChromeEngine {
    fn snapshot(&mut self) -> Result<String, BrowserError> {
        let v = self.evaluate(SNAPSHOT_JS)?;
        v.as_str().map(str::to_string).ok_or_else(|| protocol("snapshot is not a string"))
    }

    fn page_height(&mut self) -> Result<f64, BrowserError> {
        self.evaluate(HEIGHT_JS)?.as_f64().ok_or_else(|| protocol("height is not a number"))
    }

    fn geometry(&mut self) -> Result<Vec<ElementGeometry>, BrowserError> {
        let v = self.evaluate(GEOMETRY_JS)?;
        serde_json::from_str(v.as_str().unwrap_or("[]")).map_err(protocol)
    }

    fn hit_test(&mut self, x: f64, y: f64) -> Result<Option<String>, BrowserError> {
        let expr = format!(
            "(() => {{ window.scrollTo(0, {y}); const el = document.elementFromPoint({x}, {y} - window.scrollY); return el ? __vgsXPath(el) : null; }})()"
        );
        Ok(self.evaluate(&expr)?.as_str().map(str::to_string))
    }

    fn capture(&mut self, y_offset: f64, width: u32, height: u32) -> Result<RgbaImage, BrowserError> {
        let res = self
            .call(
                "Page.captureScreenshot",
                json!({"format": "png", "captureBeyondViewport": true,
                       "clip": {"x": 0, "y": y_offset, "width": width, "height": height, "scale": 1}}),
            )
            .map_err(|e| BrowserError::CaptureFailed(e.to_string()))?;
        let data = res["data"].as_str().ok_or_else(|| BrowserError::CaptureFailed("no image data".into()))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(data)
            .map_err(|e| BrowserError::CaptureFailed(e.to_string()))?;
        raster::decode_png(&bytes).map_err(|e| BrowserError::CaptureFailed(e.to_string()))
    }

    fn close(&mut self) {
        let _ = self.call("Browser.close", json!({}));
        let _ = self.child.kill();
        let _ = self.child.wait();
        let _ = std::fs::remove_dir_all(&self.profile);
    }
}
