//! Inputs shared by the benchmarks.

use std::path::PathBuf;

use leakscan_core::{discover_sources, load_unit, SourceUnit};

/// Every unit in the bundled corpus, in path order.
pub fn corpus_units() -> Vec<SourceUnit> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    discover_sources(&dir)
        .expect("corpus directory")
        .iter()
        .map(|p| load_unit(p).expect("corpus file loads"))
        .collect()
}

/// A straight-line script with `n` evaluation blocks, each leaking on its own.
pub fn synthetic_script(n: usize) -> SourceUnit {
    let mut src = String::from("import pandas as pd\ndf = pd.read_csv('data.csv')\n");
    for i in 0..n {
        src.push_str(&format!(
            "X{i} = StandardScaler().fit_transform(df)\n\
             Xb{i}, yb{i} = SMOTE().fit_resample(X{i}, df['y'])\n\
             X_train{i}, X_test{i}, y_train{i}, y_test{i} = train_test_split(Xb{i}, yb{i})\n\
             model.fit(X_train{i}, y_train{i})\n\
             print(model.score(X_test{i}, y_test{i}))\n\
             print(accuracy_score(y_test{i}, model.predict(X_test{i})))\n"
        ));
    }
    SourceUnit::from_script(format!("synthetic_{n}.py"), &src)
}
