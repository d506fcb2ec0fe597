//! Per-session browser state: windows, their pages, cookies and the
//! element reference table.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use ego_tree::NodeId;
use serde::{Deserialize, Serialize};
use url::Url;
use uuid::Uuid;

use crate::dom::{Locator, Page, Request};
use crate::error::WdError;
use crate::fetch::{self, Cookie, CookieStore, LoadError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Timeouts {
    pub implicit: u64,
    pub page_load: u64,
    pub script: u64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            implicit: 0,
            page_load: 300_000,
            script: 30_000,
        }
    }
}

#[derive(Debug)]
struct Window {
    handle: String,
    page: Page,
    history: Vec<Request>,
}

#[derive(Debug, Clone, Copy)]
struct ElementSlot {
    serial: u64,
    node: NodeId,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub timeouts: Timeouts,
    client: reqwest::Client,
    windows: Vec<Window>,
    current: Option<String>,
    cookies: CookieStore,
    elements: HashMap<String, ElementSlot>,
    known: HashMap<(u64, NodeId), String>,
    next_serial: u64,
}

impl Session {
    pub fn new(client: reqwest::Client) -> Self {
        let mut session = Session {
            id: Uuid::new_v4().to_string(),
            timeouts: Timeouts::default(),
            client,
            windows: Vec::new(),
            current: None,
            cookies: CookieStore::default(),
            elements: HashMap::new(),
            known: HashMap::new(),
            next_serial: 1,
        };
        let handle = session.open_window();
        session.current = Some(handle);
        session
    }

    fn serial(&mut self) -> u64 {
        let s = self.next_serial;
        self.next_serial += 1;
        s
    }

    /// Opens a blank window without switching to it.
    pub fn open_window(&mut self) -> String {
        let handle = Uuid::new_v4().to_string();
        let serial = self.serial();
        self.windows.push(Window {
            handle: handle.clone(),
            page: Page::blank(serial),
            history: Vec::new(),
        });
        handle
    }

    pub fn handles(&self) -> Vec<String> {
        self.windows.iter().map(|w| w.handle.clone()).collect()
    }

    pub fn current_handle(&self) -> Result<String, WdError> {
        self.window().map(|w| w.handle.clone())
    }

    pub fn switch_to(&mut self, handle: &str) -> Result<(), WdError> {
        if self.windows.iter().any(|w| w.handle == handle) {
            self.current = Some(handle.to_string());
            Ok(())
        } else {
            Err(WdError::no_such_window(format!("no window {handle}")))
        }
    }

    /// Closes the current window and returns the remaining handles. The
    /// session has no current window afterwards until one is switched to.
    pub fn close_window(&mut self) -> Result<Vec<String>, WdError> {
        let handle = self.current_handle()?;
        self.windows.retain(|w| w.handle != handle);
        self.current = None;
        Ok(self.handles())
    }

    fn window(&self) -> Result<&Window, WdError> {
        let handle = self
            .current
            .as_deref()
            .ok_or_else(|| WdError::no_such_window("current window was closed"))?;
        self.windows
            .iter()
            .find(|w| w.handle == handle)
            .ok_or_else(|| WdError::no_such_window("current window was closed"))
    }

    fn window_mut(&mut self) -> Result<&mut Window, WdError> {
        let handle = self
            .current
            .clone()
            .ok_or_else(|| WdError::no_such_window("current window was closed"))?;
        self.windows
            .iter_mut()
            .find(|w| w.handle == handle)
            .ok_or_else(|| WdError::no_such_window("current window was closed"))
    }

    pub fn page(&self) -> Result<&Page, WdError> {
        self.window().map(|w| &w.page)
    }

    pub fn cookies(&self) -> Result<Vec<Cookie>, WdError> {
        let url = self.page()?.url.clone();
        Ok(self.cookies.for_url(&url).into_iter().cloned().collect())
    }

    pub fn add_cookie(&mut self, mut cookie: Cookie) -> Result<(), WdError> {
        let url = self.page()?.url.clone();
        let Some(host) = url.host_str() else {
            return Err(WdError::unknown(
                "cannot set a cookie on a page without a host",
            ));
        };
        if cookie.domain.is_none() {
            cookie.domain = Some(host.to_string());
        }
        if cookie.path.is_none() {
            cookie.path = Some("/".into());
        }
        self.cookies.insert(cookie);
        Ok(())
    }

    pub fn delete_cookie(&mut self, name: &str) {
        self.cookies.remove(name);
    }

    pub fn delete_cookies(&mut self) {
        self.cookies.clear();
    }

    pub async fn navigate(&mut self, url: &str) -> Result<(), WdError> {
        let base = self.page()?.url.clone();
        let target = Url::parse(url)
            .or_else(|_| base.join(url))
            .map_err(|e| WdError::invalid_argument(format!("bad url {url:?}: {e}")))?;
        self.perform(Request::get(target)).await
    }

    pub async fn refresh(&mut self) -> Result<(), WdError> {
        let last = self.window()?.history.last().cloned();
        match last {
            Some(request) => {
                self.window_mut()?.history.pop();
                self.perform(request).await
            }
            None => Ok(()),
        }
    }

    pub async fn back(&mut self) -> Result<(), WdError> {
        let window = self.window_mut()?;
        if window.history.len() < 2 {
            return Ok(());
        }
        window.history.pop();
        let previous = window.history.pop().expect("checked length");
        self.perform(previous).await
    }

    async fn perform(&mut self, request: Request) -> Result<(), WdError> {
        let timeout = Duration::from_millis(self.timeouts.page_load);
        let loaded = fetch::load(&self.client, &mut self.cookies, request.clone(), timeout)
            .await
            .map_err(|e| match e {
                LoadError::Timeout(_) => WdError::timeout(e.to_string()),
                other => WdError::unknown(other.to_string()),
            })?;
        let serial = self.serial();
        let window = self.window_mut()?;
        // A redirected request is recorded as a plain GET of where it landed.
        window.history.push(if loaded.url == request.url {
            request
        } else {
            Request::get(loaded.url.clone())
        });
        window.page = Page::new(loaded.url, &loaded.body, serial);
        Ok(())
    }

    fn reference(&mut self, serial: u64, node: NodeId) -> String {
        if let Some(id) = self.known.get(&(serial, node)) {
            return id.clone();
        }
        let id = Uuid::new_v4().to_string();
        self.known.insert((serial, node), id.clone());
        self.elements
            .insert(id.clone(), ElementSlot { serial, node });
        id
    }

    /// Resolves a reference to a node of the current page.
    pub fn resolve(&self, element: &str) -> Result<NodeId, WdError> {
        let slot = self.elements.get(element).ok_or_else(|| {
            WdError::no_such_element(format!("unknown element reference {element}"))
        })?;
        if slot.serial != self.page()?.serial {
            return Err(WdError::stale_element(element));
        }
        Ok(slot.node)
    }

    /// Finds elements, polling for the implicit wait when none match.
    pub async fn find(
        &mut self,
        locator: Locator,
        value: &str,
        from: Option<&str>,
    ) -> Result<Vec<String>, WdError> {
        let deadline = Instant::now() + Duration::from_millis(self.timeouts.implicit);
        loop {
            let scope = from.map(|e| self.resolve(e)).transpose()?;
            let page = self.page()?;
            let serial = page.serial;
            let found = page
                .find(locator, value, scope)
                .map_err(WdError::invalid_selector)?;
            if !found.is_empty() || Instant::now() >= deadline {
                return Ok(found
                    .into_iter()
                    .map(|n| self.reference(serial, n))
                    .collect());
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }

    pub async fn click(&mut self, element: &str) -> Result<(), WdError> {
        let node = self.resolve(element)?;
        let window = self.window_mut()?;
        let request = window.page.click(node).map_err(WdError::not_interactable)?;
        if let Some(request) = request {
            self.perform(request).await?;
        }
        Ok(())
    }

    pub fn send_keys(&mut self, element: &str, text: &str) -> Result<(), WdError> {
        let node = self.resolve(element)?;
        let page = &mut self.window_mut()?.page;
        match page.send_keys(node, text) {
            Ok(()) => Ok(()),
            Err(e) => Err(WdError::not_interactable(e)),
        }
    }

    pub fn clear(&mut self, element: &str) -> Result<(), WdError> {
        let node = self.resolve(element)?;
        self.window_mut()?
            .page
            .clear(node)
            .map_err(WdError::not_interactable)
    }
}
