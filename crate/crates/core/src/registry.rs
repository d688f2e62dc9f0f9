//! Name-keyed registries of interchangeable strategies.
//!
//! Each algorithm family (MOA solvers, SEH solvers, training objectives)
//! exposes a trait; concrete variants are registered under a stable name
//! and built from the family's stage configuration at runtime.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Factory<T, C> = Box<dyn Fn(&C) -> Box<T> + Send + Sync>;

pub struct Registry<T: ?Sized, C> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T, C>>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &'static str, factory: F) -> &mut Self
    where
        F: Fn(&C) -> Box<T> + Send + Sync + 'static,
    {
        self.entries.insert(name, Box::new(factory));
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn build(&self, name: &str, config: &C) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(factory) => Ok(factory(config)),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Fixed(String);

    impl Greeter for Fixed {
        fn greet(&self) -> String {
            self.0.clone()
        }
    }

    #[test]
    fn builds_registered_and_rejects_unknown() {
        let mut reg: Registry<dyn Greeter, String> = Registry::new("greeter");
        reg.register("fixed", |c: &String| Box::new(Fixed(c.clone())));
        assert_eq!(reg.build("fixed", &"hi".into()).unwrap().greet(), "hi");
        let err = reg.build("nope", &String::new()).err().unwrap();
        assert!(err.to_string().contains("fixed"));
        assert_eq!(reg.names(), vec!["fixed"]);
    }
}
