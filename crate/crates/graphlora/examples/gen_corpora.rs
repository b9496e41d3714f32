//! Regenerates the bundled fixture corpora and the golden graph outputs.
//!
//! Usage: `cargo run -p graphlora --example gen_corpora -- <fixtures-dir>`

use std::path::{Path, PathBuf};

use apsg::ingest::{corpus_to_json, Label, PatchRecord, PATCH_MARKER};
use graphlora::extract::write_extracted;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn record(id: &str, label: Label, context: &str, buggy: &[&str], patched: &[&str]) -> PatchRecord {
    PatchRecord {
        id: id.into(),
        project: "synthetic".into(),
        buggy_lines: buggy.iter().map(|s| s.to_string()).collect(),
        patched_lines: patched.iter().map(|s| s.to_string()).collect(),
        method_context: context.replace("@@", PATCH_MARKER),
        label,
        ground_truth_patch: None,
    }
}

/// Twenty hand-written patches covering every statement and node kind.
pub fn synthetic20() -> Vec<PatchRecord> {
    use Label::{Correct as C, Overfitting as O};
    let mut v = vec![
        record("s01", C, "int compute(int a, int b) {\n    int x = a * 2;\n    int y = b - 1;\n    if (x > y) {\n@@\n        x = a - b;\n@@\n    }\n    int z = x + y;\n    return z;\n}", &["        x = a - b;"], &["        x = a + b;"]),
        record("s02", O, "int clamp(int v, int lo, int hi) {\n@@\n    if (v < lo) {\n        v = lo;\n    }\n@@\n    if (v > hi) {\n        v = hi;\n    }\n    return v;\n}", &["    if (v < lo) {", "        v = lo;", "    }"], &["    v = lo;"]),
        record("s03", O, "int size(Items xs) {\n    int n = xs.length;\n@@\n    return n;\n@@\n}", &["    return n;"], &["    return 0;"]),
        record("s04", O, "int find(Items xs, int key) {\n    int i = 0;\n@@\n    while (i < xs.length) {\n@@\n        if (xs.get(i) == key) {\n            return i;\n        }\n        i = i + 1;\n    }\n    return -1;\n}", &["    while (i < xs.length) {"], &["    if (key < 0) {", "        return -1;", "    }", "    while (i < xs.length) {"]),
        record("s05", C, "double mean(Items xs) {\n    double total = 0.0;\n    for (int i = 0; i < xs.length; i++) {\n@@\n        total = total - xs.get(i);\n@@\n    }\n    return total / xs.length;\n}", &["        total = total - xs.get(i);"], &["        total += xs.get(i);"]),
        record("s06", C, "String label(int code) {\n    String s = \"none\";\n    switch (code) {\n        case 1:\n@@\n            s = \"two\";\n@@\n            break;\n        case 2:\n            s = \"two\";\n            break;\n        default:\n            s = \"many\";\n    }\n    return s;\n}", &["            s = \"two\";"], &["            s = \"one\";"]),
        record("s07", O, "int parse(String text) {\n    int value = 0;\n    try {\n        value = Integer.parseInt(text);\n@@\n        log(value);\n@@\n    } catch (Exception e) {\n        value = -1;\n    }\n    return value;\n}", &["        log(value);"], &[]),
        record("s08", C, "void fill(Items xs, int v) {\n    int i = 0;\n@@\n    while (i <= xs.length) {\n@@\n        xs.set(i, v);\n        i++;\n    }\n}", &["    while (i <= xs.length) {"], &["    while (i < xs.length) {"]),
        record("s09", O, "boolean valid(int a, int b) {\n    boolean ok = a > 0 && b > 0;\n@@\n    return ok && a < b;\n@@\n}", &["    return ok && a < b;"], &["    return true;"]),
        record("s10", C, "int max(int a, int b) {\n    int m = a;\n@@\n    if (b < m) {\n@@\n        m = b;\n    }\n    return m;\n}", &["    if (b < m) {"], &["    if (b > m) {"]),
        record("s11", O, "int divide(int a, int b) {\n@@\n    int q = a / b;\n@@\n    return q;\n}", &["    int q = a / b;"], &["    if (b == 0) {", "        return 0;", "    }", "    int q = a / b;"]),
        record("s12", C, "long power(long base, int exp) {\n    long result = 1;\n    for (int i = 0; i < exp; i++) {\n@@\n        result = result + base;\n@@\n    }\n    return result;\n}", &["        result = result + base;"], &["        result = result * base;"]),
        record("s13", O, "int count(Items xs, int t) {\n    int c = 0;\n    for (int x : xs) {\n@@\n        if (x == t) {\n            c = c + 1;\n        }\n@@\n    }\n    return c;\n}", &["        if (x == t) {", "            c = c + 1;", "        }"], &["        c = c + 1;"]),
        record("s14", C, "void swap(Items xs, int i, int j) {\n    int tmp = xs.get(i);\n@@\n    xs.set(i, xs.get(i));\n@@\n    xs.set(j, tmp);\n}", &["    xs.set(i, xs.get(i));"], &["    xs.set(i, xs.get(j));"]),
        record("s15", O, "int abs(int v) {\n@@\n    if (v < 0) {\n        v = -v;\n    }\n@@\n    return v;\n}", &["    if (v < 0) {", "        v = -v;", "    }"], &[]),
        record("s16", O, "int index(String s, char c) {\n    int i = s.indexOf(c);\n@@\n    return i;\n@@\n}", &["    return i;"], &["    return -1;"]),
        record("s17", C, "int sum(int n) {\n    int s = 0;\n    int i = 1;\n    while (i <= n) {\n        s += i;\n@@\n        i = i + 2;\n@@\n    }\n    return s;\n}", &["        i = i + 2;"], &["        i++;"]),
        record("s18", O, "int safeGet(Items xs, int i) {\n    int r = 0;\n@@\n    r = xs.get(i);\n@@\n    return r;\n}", &["    r = xs.get(i);"], &["    if (i >= xs.length) {", "        return 0;", "    }", "    r = xs.get(i);"]),
        record("s19", O, "double ratio(double a, double b) {\n    double r = a / b;\n    if (b == 0.0) {\n@@\n        r = 0.0;\n@@\n    }\n    return r;\n}", &["        r = 0.0;"], &["        r = 1.0;"]),
        record("s20", O, "int total(Items xs) {\n    int t = 0;\n    for (int i = 0; i < xs.length; i++) {\n        t = t + xs.get(i);\n    }\n@@\n    notify(t);\n@@\n    return t;\n}", &["    notify(t);"], &[]),
    ];
    v[0].ground_truth_patch = Some(vec!["        x = a + b;".into()]);
    v[4].ground_truth_patch = Some(vec!["        total += xs.get(i);".into()]);
    v
}

const NAMES: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "count", "limit", "size", "width", "depth", "offset",
];

/// 64 records whose label is fixed by which of two disjoint patch token
/// families appears.
pub fn separable64() -> Vec<PatchRecord> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(64);
    let mut out = Vec::new();
    for i in 0..64 {
        let mut picks: Vec<&str> = NAMES.to_vec();
        picks.shuffle(&mut rng);
        let (a, b, s) = (picks[0], picks[1], picks[2]);
        let k = rng.random_range(1..10);
        let label = if i % 2 == 0 {
            Label::Correct
        } else {
            Label::Overfitting
        };
        let patched = match label {
            Label::Correct => vec![format!("    {s} = {a} * {b} + {k};")],
            Label::Overfitting => vec![
                format!("    if ({a} == {k}) {{"),
                "        return -1;".into(),
                "    }".into(),
            ],
        };
        let context = format!(
            "int f{i}(int {a}, int {b}) {{\n    int {s} = {a};\n@@\n    {s} = {a} - {b};\n@@\n    return {s};\n}}"
        );
        let mut r = record(
            &format!("sep{i:02}"),
            label,
            &context,
            &[&format!("    {s} = {a} - {b};")],
            &[],
        );
        r.patched_lines = patched;
        out.push(r);
    }
    out
}

/// Pairs of records with identical prompts (same context and patched lines)
/// whose buggy sides differ. In the Overfitting member the patch removes an
/// `if` header; in the Correct member it rewrites an operator. Only the graph
/// attributes can tell them apart.
pub fn graph_signal(pairs: usize) -> Vec<PatchRecord> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    let ops = ["+", "-", "*"];
    let mut out = Vec::new();
    for i in 0..pairs {
        let mut picks: Vec<&str> = NAMES.to_vec();
        picks.shuffle(&mut rng);
        let (a, b, s) = (picks[0], picks[1], picks[2]);
        let op = *ops.choose(&mut rng).expect("non-empty");
        let other = if op == "+" { "-" } else { "+" };
        let patched = format!("    {s} = {s} {op} {a};");
        let context = format!(
            "int g{i}(int {a}, int {b}) {{\n    int {s} = {b};\n@@\n@@\n    return {s};\n}}"
        );
        let guarded = [
            format!("    if ({a} > {b}) {{"),
            format!("        {s} = {s} {op} {a};"),
            "    }".to_string(),
        ];
        let rewritten = [format!("    {s} = {s} {other} {a};")];
        for (tag, label, buggy) in [
            ("o", Label::Overfitting, &guarded[..]),
            ("c", Label::Correct, &rewritten[..]),
        ] {
            let region = buggy.join("\n");
            let ctx = context.replacen("@@\n@@", &format!("@@\n{region}\n@@"), 1);
            let buggy: Vec<&str> = buggy.iter().map(String::as_str).collect();
            out.push(record(
                &format!("gs{i:02}{tag}"),
                label,
                &ctx,
                &buggy,
                &[&patched],
            ));
        }
    }
    out
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap_or_else(|e| panic!("writing {}: {e}", path.display()));
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir).expect("create fixtures dir");
    let s20 = synthetic20();
    write(&dir.join("synthetic20.json"), &corpus_to_json(&s20));
    write(
        &dir.join("separable64.json"),
        &corpus_to_json(&separable64()),
    );
    write(
        &dir.join("graph_signal.json"),
        &corpus_to_json(&graph_signal(16)),
    );
    let golden = dir.join("golden").join("synthetic20");
    if golden.exists() {
        std::fs::remove_dir_all(&golden).expect("clear golden dir");
    }
    write_extracted(&s20, &golden, false).expect("extract synthetic corpus");
    println!("fixtures written to {}", dir.display());
}
