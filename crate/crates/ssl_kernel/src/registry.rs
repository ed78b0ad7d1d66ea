//! Name-keyed factories for runtime-selected strategies.

use crate::error::{Error, Result};

/// Builds a boxed strategy from a spec value.
pub type Factory<S, T> = fn(&S) -> Result<Box<T>>;

/// An ordered table of named factories.
///
/// Registration order is preserved so listings are deterministic.
pub struct Registry<S: ?Sized, T: ?Sized> {
    kind: &'static str,
    entries: Vec<(&'static str, Factory<S, T>)>,
}

impl<S: ?Sized, T: ?Sized> Registry<S, T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds or replaces the factory registered under `name`.
    pub fn register(&mut self, name: &'static str, factory: Factory<S, T>) -> &mut Self {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = factory,
            None => self.entries.push((name, factory)),
        }
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn build(&self, name: &str, spec: &S) -> Result<Box<T>> {
        match self.entries.iter().find(|(n, _)| *n == name) {
            Some((_, f)) => f(spec),
            None => Err(Error::Unknown {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape {
        fn area(&self) -> f64;
    }
    struct Sq(f64);
    impl Shape for Sq {
        fn area(&self) -> f64 {
            self.0 * self.0
        }
    }

    fn square(side: &f64) -> Result<Box<dyn Shape>> {
        Ok(Box::new(Sq(*side)))
    }
    fn doubled(side: &f64) -> Result<Box<dyn Shape>> {
        Ok(Box::new(Sq(2.0 * side)))
    }

    #[test]
    fn lookup_and_replace() {
        let mut r: Registry<f64, dyn Shape> = Registry::new("shape");
        r.register("square", square);
        assert_eq!(r.build("square", &3.0).unwrap().area(), 9.0);
        r.register("square", doubled);
        assert_eq!(r.names(), vec!["square"]);
        assert_eq!(r.build("square", &1.0).unwrap().area(), 4.0);
        let err = r.build("circle", &1.0).err().unwrap();
        assert!(err.to_string().contains("circle"));
    }
}
