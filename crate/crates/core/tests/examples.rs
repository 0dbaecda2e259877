//! Runs every example so they stay in sync with the library.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run_example();
        }
    };
}

example!(repair_annotations);
example!(align_tokens);
example!(strategies);
example!(train_tagger);
example!(score_spans);
example!(ablation);
example!(tune_grid);
example!(embeddings_file);
example!(make_fixtures);
