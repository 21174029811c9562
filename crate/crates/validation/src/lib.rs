//! Home of the `acceptance` test target; run it with `cargo test -p kirlab-validation --test acceptance`.
