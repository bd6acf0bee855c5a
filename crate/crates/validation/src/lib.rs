//! Holds the `acceptance` test target, which runs after every other package's tests.
