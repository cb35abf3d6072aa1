use std::fs;
use std::path::Path;

use polyg2p::ablation::{
    format_table, run_ablation, write_reports, AblationCondition, AblationContext, AblationError,
    AblationGrid, PipelineFactory,
};
use polyg2p::dataset::{DatasetSplit, SplitSource};
use polyg2p::dictionary::{load_dictionary, Dictionary};
use polyg2p::generation::{GenerationError, GenerationRequest, Generator};
use polyg2p::pinyin::parse_pinyin;
use polyg2p::prompting::{Sample, Style, TemplateCatalog};

struct Fixed(String);

impl Generator for Fixed {
    fn backend_id(&self) -> String {
        format!("fixed({})", self.0)
    }
    fn generate(&self, _: &GenerationRequest) -> Result<String, GenerationError> {
        Ok(self.0.clone())
    }
}

/// Answers alternate between the two readings of 红 per condition and the
/// train sizes seen are recorded.
#[derive(Default)]
struct FakeFactory {
    calls: usize,
    train_sizes: Vec<usize>,
}

impl PipelineFactory for FakeFactory {
    fn build(
        &mut self,
        _: &AblationCondition,
        train: &[Sample],
        _: &AblationContext<'_>,
    ) -> Result<Box<dyn Generator>, AblationError> {
        self.train_sizes.push(train.len());
        self.calls += 1;
        let answer = if self.calls % 3 == 0 { "gong1" } else { "hong2" };
        Ok(Box::new(Fixed(answer.into())))
    }
}

fn dictionary() -> Dictionary {
    load_dictionary(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dictionary.jsonl")).unwrap()
}

fn split() -> DatasetSplit {
    let s = |m: &str, p: &str| Sample::from_marked(m, Some(parse_pinyin(p).unwrap())).unwrap();
    DatasetSplit {
        train: (0..100).map(|i| s(&format!("第{i}面▂红▂旗"), "hong2")).collect(),
        dev: vec![],
        test: vec![
            s("▂红▂旗", "hong2"),
            s("女▂红▂", "gong1"),
            s("▂红▂色", "hong2"),
            s("▂红▂叶", "hong2"),
        ],
    }
}

fn run(grid: &AblationGrid, factory: &mut FakeFactory) -> Vec<polyg2p::eval::EvalReport> {
    let dict = dictionary();
    let catalog = TemplateCatalog::default();
    let ctx = AblationContext::new(&dict, &catalog);
    run_ablation(grid, &split(), &SplitSource::Published, &ctx, factory, 7).unwrap()
}

#[test]
fn two_by_two_grid_gives_four_distinct_reports() {
    let grid = AblationGrid { ratios: vec![1.0], ..AblationGrid::default() };
    let reports = run(&grid, &mut FakeFactory::default());
    let mut labels: Vec<&str> = reports.iter().map(|r| r.condition.label.as_str()).collect();
    assert_eq!(labels.len(), 4);
    labels.sort();
    labels.dedup();
    assert_eq!(labels.len(), 4);
    for r in &reports {
        assert_eq!(r.condition.seed, 7);
        assert_eq!(r.condition.train_ratio, Some(1.0));
        assert!(r.condition.backend.starts_with("fixed("));
        assert_eq!(r.condition.split_source, Some(SplitSource::Published));
    }
}

#[test]
fn ratios_take_a_prefix_of_the_train_split() {
    let grid = AblationGrid {
        styles: vec![Style::MultipleChoice],
        knowledge: vec![true],
        ratios: vec![0.6, 0.8, 1.0],
    };
    let mut factory = FakeFactory::default();
    run(&grid, &mut factory);
    assert_eq!(factory.train_sizes, [60, 80, 100]);
}

#[test]
fn full_grid_table_matches_golden_layout() {
    let reports = run(&AblationGrid::default(), &mut FakeFactory::default());
    assert_eq!(reports.len(), 12);
    let table = format_table(&reports);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/ablation_table.txt");
    if std::env::var_os("POLYG2P_BLESS").is_some() {
        fs::write(&path, &table).unwrap();
    }
    assert_eq!(table, fs::read_to_string(&path).unwrap());
}

#[test]
fn reruns_are_identical_apart_from_timing() {
    let grid = AblationGrid::default();
    let a = run(&grid, &mut FakeFactory::default());
    let b = run(&grid, &mut FakeFactory::default());
    let strip = |r: &[polyg2p::eval::EvalReport]| r.iter().map(|x| x.record_without_timing()).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));

    let dir = tempfile::tempdir().unwrap();
    write_reports(&a, dir.path()).unwrap();
    let lines = fs::read_to_string(dir.path().join("reports.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 12);
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["timing"]["wall_clock_seconds"].is_number());
    }
}

#[test]
fn bad_grids_are_rejected() {
    let dict = dictionary();
    let catalog = TemplateCatalog::default();
    let ctx = AblationContext::new(&dict, &catalog);
    let empty = AblationGrid { styles: vec![], ..AblationGrid::default() };
    assert!(matches!(
        run_ablation(&empty, &split(), &SplitSource::Published, &ctx, &mut FakeFactory::default(), 0),
        Err(AblationError::EmptyGrid)
    ));
    let bad = AblationGrid { ratios: vec![0.0], ..AblationGrid::default() };
    assert!(matches!(
        run_ablation(&bad, &split(), &SplitSource::Published, &ctx, &mut FakeFactory::default(), 0),
        Err(AblationError::BadRatio(_))
    ));
}
