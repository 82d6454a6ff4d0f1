use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{CompletionRequest, CompletionResult, Provider, ProviderError};
use crate::agents::AgentKind;

/// Wraps a provider and fails chosen calls with a timeout.
pub struct FaultyProvider {
    inner: Arc<dyn Provider>,
    faults: Mutex<HashMap<(String, AgentKind, usize), usize>>,
}

impl FaultyProvider {
    pub fn new(inner: Arc<dyn Provider>) -> Self {
        FaultyProvider {
            inner,
            faults: Mutex::new(HashMap::new()),
        }
    }

    /// The next `times` calls for this key time out.
    pub fn inject_timeout(self, session: &str, agent: AgentKind, step: usize, times: usize) -> Self {
        self.faults
            .lock()
            .expect("fault table poisoned")
            .insert((session.to_string(), agent, step), times);
        self
    }
}

impl Provider for FaultyProvider {
    fn complete(
        &self,
        req: &CompletionRequest<'_>,
        sink: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, ProviderError> {
        {
            let mut faults = self.faults.lock().expect("fault table poisoned");
            if let Some(left) = faults.get_mut(&(req.session.to_string(), req.agent, req.step)) {
                if *left > 0 {
                    *left -= 1;
                    return Err(ProviderError::Timeout);
                }
            }
        }
        self.inner.complete(req, sink)
    }

    fn deterministic(&self) -> bool {
        self.inner.deterministic()
    }
}
