//! Bundle and CSV readers/writers.
//!
//! Loading is deterministic: when no id map is present, external ids are
//! remapped to dense indices by first appearance. A bundle directory
//! carries `idmap.json`, which is authoritative on reload so that a
//! write/load round trip reproduces identical indices.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::core::{
    build_qmatrix, ConceptId, ExerciseId, History, PrerequisiteGraph, StudentId,
};

use super::{DataError, Dataset, IdMaps};

pub const LOGS_FILE: &str = "logs.csv";
pub const QMATRIX_FILE: &str = "qmatrix.csv";
pub const PREREQS_FILE: &str = "prereqs.csv";
pub const IDMAP_FILE: &str = "idmap.json";

fn read_to_string(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), DataError> {
    fs::write(path, contents).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Interns external string ids in order of first appearance. When built
/// from a persisted id map it is sealed: unknown ids become errors.
struct IdMapper {
    names: Vec<String>,
    index: HashMap<String, u32>,
    sealed: bool,
}

impl IdMapper {
    fn open() -> Self {
        IdMapper { names: Vec::new(), index: HashMap::new(), sealed: false }
    }

    fn sealed(names: &[String]) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        IdMapper { names: names.to_vec(), index, sealed: true }
    }

    fn intern(&mut self, name: &str) -> Option<u32> {
        if let Some(&i) = self.index.get(name) {
            return Some(i);
        }
        if self.sealed {
            return None;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        Some(i)
    }

    fn lookup(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }
}

struct CsvReader<'a> {
    path: String,
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> CsvReader<'a> {
    fn new(path: &Path, contents: &'a str, expected_header: &[&str]) -> Result<Self, DataError> {
        let mut lines = contents.lines();
        let header = lines.next().ok_or_else(|| DataError::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            msg: "missing header".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < expected_header.len()
            || cols[..expected_header.len()] != *expected_header
        {
            return Err(DataError::MalformedRow {
                path: path.display().to_string(),
                line: 1,
                msg: format!(
                    "expected header starting with '{}', got '{header}'",
                    expected_header.join(",")
                ),
            });
        }
        Ok(CsvReader { path: path.display().to_string(), lines, line_no: 1 })
    }

    fn rows(&mut self) -> Result<Vec<(usize, Vec<String>)>, DataError> {
        let mut out = Vec::new();
        for line in self.lines.by_ref() {
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            out.push((self.line_no, line.split(',').map(|f| f.trim().to_string()).collect()));
        }
        Ok(out)
    }

    fn malformed(&self, line: usize, msg: impl Into<String>) -> DataError {
        DataError::MalformedRow { path: self.path.clone(), line, msg: msg.into() }
    }
}

fn load_qmatrix_csv(
    path: &Path,
    exercises: &mut IdMapper,
    concepts: &mut IdMapper,
) -> Result<Vec<(ExerciseId, ConceptId)>, DataError> {
    let contents = read_to_string(path)?;
    let mut reader = CsvReader::new(path, &contents, &["exercise_id", "concept_id"])?;
    let mut pairs = Vec::new();
    for (line, fields) in reader.rows()? {
        if fields.len() != 2 {
            return Err(reader.malformed(line, format!("expected 2 fields, got {}", fields.len())));
        }
        let e = exercises
            .intern(&fields[0])
            .ok_or_else(|| reader.malformed(line, format!("unknown exercise id '{}'", fields[0])))?;
        let c = concepts
            .intern(&fields[1])
            .ok_or_else(|| reader.malformed(line, format!("unknown concept id '{}'", fields[1])))?;
        pairs.push((ExerciseId(e), ConceptId(c)));
    }
    Ok(pairs)
}

fn load_prereqs_csv(
    path: &Path,
    concepts: &mut IdMapper,
) -> Result<Vec<(ConceptId, ConceptId)>, DataError> {
    let contents = read_to_string(path)?;
    let mut reader =
        CsvReader::new(path, &contents, &["prereq_concept", "dependent_concept"])?;
    let mut edges = Vec::new();
    for (line, fields) in reader.rows()? {
        if fields.len() != 2 {
            return Err(reader.malformed(line, format!("expected 2 fields, got {}", fields.len())));
        }
        let pre = concepts
            .intern(&fields[0])
            .ok_or_else(|| reader.malformed(line, format!("unknown concept id '{}'", fields[0])))?;
        let dep = concepts
            .intern(&fields[1])
            .ok_or_else(|| reader.malformed(line, format!("unknown concept id '{}'", fields[1])))?;
        edges.push((ConceptId(pre), ConceptId(dep)));
    }
    Ok(edges)
}

struct RawLogRow {
    student: u32,
    exercise: ExerciseId,
    correct: bool,
    timestamp: Option<i64>,
    file_order: usize,
}

/// Parses an interaction log. The exercise mapper must already hold every
/// exercise (the Q-matrix is loaded first); rows naming unknown exercises
/// are rejected with their line number.
fn load_logs_csv(
    path: &Path,
    students: &mut IdMapper,
    exercises: &IdMapper,
) -> Result<Vec<History>, DataError> {
    let contents = read_to_string(path)?;
    let mut reader =
        CsvReader::new(path, &contents, &["student_id", "exercise_id", "correct"])?;
    let mut rows: Vec<RawLogRow> = Vec::new();
    for (order, (line, fields)) in reader.rows()?.into_iter().enumerate() {
        if fields.len() != 3 && fields.len() != 4 {
            return Err(reader.malformed(line, format!("expected 3 or 4 fields, got {}", fields.len())));
        }
        let student = students
            .intern(&fields[0])
            .ok_or_else(|| reader.malformed(line, format!("unknown student id '{}'", fields[0])))?;
        let exercise = exercises.lookup(&fields[1]).ok_or_else(|| DataError::UnknownExercise {
            path: path.display().to_string(),
            line,
            id: fields[1].clone(),
        })?;
        let correct = match fields[2].as_str() {
            "0" => false,
            "1" => true,
            other => {
                return Err(reader.malformed(line, format!("correct must be 0 or 1, got '{other}'")))
            }
        };
        let timestamp = match fields.get(3) {
            None => None,
            Some(t) if t.is_empty() => None,
            Some(t) => Some(t.parse::<i64>().map_err(|_| {
                reader.malformed(line, format!("timestamp must be an integer, got '{t}'"))
            })?),
        };
        rows.push(RawLogRow {
            student,
            exercise: ExerciseId(exercise),
            correct,
            timestamp,
            file_order: order,
        });
    }
    // group per student, order by timestamp then file order, then reduce
    // timestamps to ordinal steps
    let n_students = students.names.len();
    let mut per_student: Vec<Vec<&RawLogRow>> = vec![Vec::new(); n_students];
    for row in &rows {
        per_student[row.student as usize].push(row);
    }
    let mut logs = Vec::with_capacity(n_students);
    for (s, mut student_rows) in per_student.into_iter().enumerate() {
        student_rows.sort_by_key(|r| (r.timestamp.unwrap_or(i64::MIN), r.file_order));
        let mut h = History::new(StudentId(s as u32));
        for row in student_rows {
            h.append_next(row.exercise, row.correct);
        }
        logs.push(h);
    }
    Ok(logs)
}

/// Builds a dataset from three standalone CSV files, deriving the id maps
/// by first appearance. `prereqs_path` may be absent (flat graph).
pub fn ingest(
    logs_path: &Path,
    qmatrix_path: &Path,
    prereqs_path: Option<&Path>,
) -> Result<Dataset, DataError> {
    let mut exercises = IdMapper::open();
    let mut concepts = IdMapper::open();
    let mut students = IdMapper::open();
    let pairs = load_qmatrix_csv(qmatrix_path, &mut exercises, &mut concepts)?;
    let edges = match prereqs_path {
        Some(p) => load_prereqs_csv(p, &mut concepts)?,
        None => Vec::new(),
    };
    let q = build_qmatrix(&pairs, exercises.names.len(), concepts.names.len())?;
    let prereqs = PrerequisiteGraph::from_edges(&edges, concepts.names.len())?;
    let logs = load_logs_csv(logs_path, &mut students, &exercises)?;
    let dataset = Dataset {
        q,
        prereqs,
        logs,
        id_maps: IdMaps {
            students: students.names,
            exercises: exercises.names,
            concepts: concepts.names,
        },
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Loads a bundle directory. `idmap.json`, when present, pins the dense
/// indices; otherwise they are derived by first appearance.
pub fn load_bundle(dir: &Path) -> Result<Dataset, DataError> {
    let idmap_path = dir.join(IDMAP_FILE);
    if idmap_path.exists() {
        let contents = read_to_string(&idmap_path)?;
        let id_maps: IdMaps = serde_json::from_str(&contents).map_err(|e| DataError::BadJson {
            path: idmap_path.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut exercises = IdMapper::sealed(&id_maps.exercises);
        let mut concepts = IdMapper::sealed(&id_maps.concepts);
        let mut students = IdMapper::sealed(&id_maps.students);
        let pairs = load_qmatrix_csv(&dir.join(QMATRIX_FILE), &mut exercises, &mut concepts)?;
        let prereqs_path = dir.join(PREREQS_FILE);
        let edges = if prereqs_path.exists() {
            load_prereqs_csv(&prereqs_path, &mut concepts)?
        } else {
            Vec::new()
        };
        let q = build_qmatrix(&pairs, id_maps.exercises.len(), id_maps.concepts.len())?;
        let prereqs = PrerequisiteGraph::from_edges(&edges, id_maps.concepts.len())?;
        let mut logs = load_logs_csv(&dir.join(LOGS_FILE), &mut students, &exercises)?;
        // students with no rows still exist in the id map
        while logs.len() < id_maps.students.len() {
            logs.push(History::new(StudentId(logs.len() as u32)));
        }
        let dataset = Dataset { q, prereqs, logs, id_maps };
        dataset.validate()?;
        Ok(dataset)
    } else {
        let prereqs_path = dir.join(PREREQS_FILE);
        ingest(
            &dir.join(LOGS_FILE),
            &dir.join(QMATRIX_FILE),
            prereqs_path.exists().then_some(prereqs_path.as_path()),
        )
    }
}

/// Writes a bundle directory (creating it if needed). Output bytes are a
/// pure function of the dataset.
pub fn write_bundle(dataset: &Dataset, dir: &Path) -> Result<(), DataError> {
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let maps = &dataset.id_maps;

    let mut logs = String::from("student_id,exercise_id,correct,timestamp\n");
    for h in &dataset.logs {
        let s = &maps.students[h.student().index()];
        for it in h.items() {
            logs.push_str(&format!(
                "{s},{},{},{}\n",
                maps.exercises[it.exercise.index()],
                it.correct as u8,
                it.step
            ));
        }
    }
    write_file(&dir.join(LOGS_FILE), &logs)?;

    let mut qm = String::from("exercise_id,concept_id\n");
    for (e, c) in dataset.q.pairs() {
        qm.push_str(&format!("{},{}\n", maps.exercises[e.index()], maps.concepts[c.index()]));
    }
    write_file(&dir.join(QMATRIX_FILE), &qm)?;

    let mut pr = String::from("prereq_concept,dependent_concept\n");
    for (a, b) in dataset.prereqs.edges() {
        pr.push_str(&format!("{},{}\n", maps.concepts[a.index()], maps.concepts[b.index()]));
    }
    write_file(&dir.join(PREREQS_FILE), &pr)?;

    let json = serde_json::to_string_pretty(maps).expect("id maps always serialize");
    write_file(&dir.join(IDMAP_FILE), &json)?;
    Ok(())
}
