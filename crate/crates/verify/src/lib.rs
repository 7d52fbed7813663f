//! Holds the `acceptance` test target. Run it with `cargo test -p ssc-verify --test acceptance`.
