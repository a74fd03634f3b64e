use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use morphtag::corpus::{write_conllu, Corpus};
use morphtag::pipeline::synth;

fn morphtag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morphtag"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn stats_reports_counts() {
    let o = morphtag(&["stats", &fixture("simple.conllu")]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("sentences\t2"), "{s}");
    assert!(s.contains("tokens\t8"), "{s}");
}

#[test]
fn analyze_reports_and_attaches() {
    let dir = tempfile::tempdir().unwrap();
    let lex = dir.path().join("lex.tsv");
    fs::write(
        &lex,
        "koer\tPOS=NOUN|Case=Nom|Number=Sing\tPOS=NOUN|Case=Gen|Number=Sing\nSUFFIX -is\tPOS=VERB|Mood=Ind\n",
    )
    .unwrap();
    let out = dir.path().join("attached.conllu");
    let o = morphtag(&["analyze", &fixture("simple.conllu"), "--lexicon", p(&lex), "--report", "--attach", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("oracle (%)"), "{s}");
    assert!(s.contains("resolve first (%)"), "{s}");
    assert!(fs::read_to_string(&out).unwrap().contains("MA="));
}

fn write(dir: &Path, name: &str, c: &Corpus) -> String {
    let path = dir.join(name);
    fs::write(&path, write_conllu(c)).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn train_tag_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = synth::overfit_corpus(8);
    let train = write(dir.path(), "train.conllu", &Corpus::new("t", c.sentences[..30].to_vec()));
    let dev = write(dir.path(), "dev.conllu", &Corpus::new("d", c.sentences[30..].to_vec()));
    let ckpt = dir.path().join("m.ckpt");
    let cfg = dir.path().join("train.cfg");
    fs::write(
        &cfg,
        format!(
            "# tiny run\nmodel = mc\ntrain = {train}\ndev = {dev}\nout = {}\nmax-epochs = 5\npatience = 5\nlr = 0.1\n\
             word-dim = 8\nchar-dim = 4\nhidden-dim = 8\n",
            p(&ckpt)
        ),
    )
    .unwrap();

    let o = morphtag(&["train", "--config", p(&cfg), "--max-epochs", "2"]);
    assert_eq!(o.status.code(), Some(1), "patience above max epochs is rejected");
    let o = morphtag(&["train", "--config", p(&cfg), "--max-epochs", "2", "--patience", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(ckpt.with_extension("log")).unwrap();
    assert_eq!(log.lines().count(), 2, "flag must override config: {log}");
    assert!(stdout(&o).contains("best dev accuracy"));

    let (pred1, pred2) = (dir.path().join("p1.conllu"), dir.path().join("p2.conllu"));
    for out in [&pred1, &pred2] {
        let o = morphtag(&["tag", "--ckpt", p(&ckpt), "--in", &dev, "--out", p(out), "--model", "mc"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&pred1).unwrap(), fs::read(&pred2).unwrap());

    let o = morphtag(&["tag", "--ckpt", p(&ckpt), "--in", &dev, "--out", p(&pred2), "--model", "seq"]);
    assert_eq!(o.status.code(), Some(1));

    let o = morphtag(&["eval", "--gold", &dev, "--pred", p(&pred1)]);
    assert!(o.status.success());
    let o = morphtag(&["eval", "--gold", &dev, "--pred", p(&pred1), "--baseline", &dev]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("accuracy\t100.00\t"), "{s}");
}

#[test]
fn gradcheck_and_exit_codes() {
    let o = morphtag(&["gradcheck", "--model", "mc+emb-tag"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("max relative error"));

    assert_eq!(morphtag(&["gradcheck", "--model", "bogus"]).status.code(), Some(1));
    assert_eq!(morphtag(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(morphtag(&["--help"]).status.code(), Some(0));
    assert_eq!(morphtag(&["stats", "/nonexistent/x.conllu"]).status.code(), Some(2));
    assert_eq!(morphtag(&["train", "--train", "x"]).status.code(), Some(1));
}
