//! Name → implementation tables for the interchangeable model pieces
//! (loss channel, dark-count model, memory load model).

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Arc<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `item` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, item: Arc<T>) {
        self.entries.insert(name, item);
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Send + Sync {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hello".into()
        }
    }

    #[test]
    fn lookup_and_error_message() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register("hello", Arc::new(Hello));
        assert_eq!(reg.get("hello").unwrap().greet(), "hello");
        let err = reg.get("bye").err().unwrap().to_string();
        assert_eq!(err, "unknown greeter strategy `bye` (available: hello)");
    }
}
