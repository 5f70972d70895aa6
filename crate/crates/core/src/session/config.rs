//! Service configuration file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::engine::Catalog;
use crate::translator::{CompletionBackend, MockBackend, PromptStore, RemoteBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

impl BackendKind {
    pub fn parse(text: &str) -> Option<BackendKind> {
        match text.trim().to_ascii_lowercase().as_str() {
            "mock" => Some(BackendKind::Mock),
            "remote" => Some(BackendKind::Remote),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: BackendKind,
    /// Full chat-completions URL for the remote backend.
    pub endpoint: String,
    pub model: String,
    /// Prompt records are read from and feedback written to this directory;
    /// built-in prompts are used in memory when unset.
    pub prompts_dir: Option<PathBuf>,
    /// Catalog directory; the bundled demo catalog when unset.
    pub catalog_dir: Option<PathBuf>,
    pub seed: u64,
    /// Target of the saveModel / loadModel intents.
    pub model_path: Option<PathBuf>,
    /// Service sessions save and load `<models_dir>/<session id>.json`.
    pub models_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            backend: BackendKind::Mock,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            prompts_dir: None,
            catalog_dir: None,
            seed: 42,
            model_path: None,
            models_dir: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, SessionError> {
        let text = fs::read_to_string(path).map_err(|e| SessionError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| SessionError::Config(format!("{}: {e}", path.display())))
    }

    pub fn catalog(&self) -> Result<Catalog, SessionError> {
        match &self.catalog_dir {
            Some(dir) => Ok(Catalog::load_dir(dir)?),
            None => Ok(Catalog::demo()),
        }
    }

    pub fn prompt_store(&self) -> Result<PromptStore, SessionError> {
        match &self.prompts_dir {
            Some(dir) => Ok(PromptStore::open(dir)?),
            None => Ok(PromptStore::in_memory()),
        }
    }

    pub fn backend(&self) -> Arc<dyn CompletionBackend> {
        match self.backend {
            BackendKind::Mock => Arc::new(MockBackend),
            BackendKind::Remote => Arc::new(RemoteBackend::new(&self.endpoint, &self.model)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_takes_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"backend": "remote", "seed": 7}"#).unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!((c.backend, c.seed), (BackendKind::Remote, 7));
        assert_eq!(c.model, "gpt-4");
        fs::write(&path, r#"{"backnd": "mock"}"#).unwrap();
        assert!(matches!(Config::load(&path), Err(SessionError::Config(_))));
    }
}
