//! Test-only crate. Run `cargo test -p vernqa-acceptance --test acceptance`
//! and read the `PASS`/`FAIL` lines on stderr.
