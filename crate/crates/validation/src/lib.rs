//! Holds the `acceptance` test target. It lives in its own package so that the gate
//! runs after every other suite in the workspace, and a red criterion does not stop
//! the rest of `cargo test` from reporting.
