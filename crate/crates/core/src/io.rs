//! word2vec-compatible embedding files.
//!
//! Both formats start with a `V d` header line. Text rows are
//! `word v1 … vd`; binary rows are `word`, a space, `d` little-endian f32
//! values and a newline, byte-compatible with word2vec.c.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{ModelState, Params, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Text,
    Binary,
}

/// Which embedding matrix to export or evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Source,
    Target,
    /// Element-wise mean of source and target.
    Average,
}

/// Words with one f32 row each, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    words: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl Embeddings {
    pub fn new(words: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("dimension must be positive".into()));
        }
        if data.len() != words.len() * dim {
            return Err(Error::Format(format!(
                "{} values for {} words of dimension {dim}",
                data.len(),
                words.len()
            )));
        }
        Ok(Embeddings { words, dim, data })
    }

    pub fn from_model<F: Real>(model: &ModelState<F>, vocab: &Vocabulary, side: Side) -> Self {
        assert_eq!(model.vocab_size(), vocab.len(), "model and vocabulary disagree");
        let dim = model.dim();
        let mut data = Vec::with_capacity(vocab.len() * dim);
        for id in 0..vocab.len() {
            match side {
                Side::Source => data.extend(model.source(id).iter().map(|x| x.to_f64_lossy() as f32)),
                Side::Target => data.extend(model.target(id).iter().map(|x| x.to_f64_lossy() as f32)),
                Side::Average => data.extend(
                    model
                        .source(id)
                        .iter()
                        .zip(model.target(id))
                        .map(|(&s, &t)| ((s.to_f64_lossy() + t.to_f64_lossy()) / 2.0) as f32),
                ),
            }
        }
        Embeddings {
            words: vocab.words().to_vec(),
            dim,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn write<W: Write>(&self, w: &mut W, format: Format) -> Result<()> {
        if let Some(bad) = self.words.iter().find(|w| w.is_empty() || w.contains(char::is_whitespace)) {
            return Err(Error::WhitespaceInWord(bad.clone()));
        }
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (idx, word) in self.words.iter().enumerate() {
            let row = self.row(idx);
            match format {
                Format::Text => {
                    w.write_all(word.as_bytes())?;
                    for v in row {
                        // shortest representation that parses back to the same f32
                        write!(w, " {v}")?;
                    }
                    w.write_all(b"\n")?;
                }
                Format::Binary => {
                    w.write_all(word.as_bytes())?;
                    w.write_all(b" ")?;
                    for v in row {
                        w.write_all(&v.to_le_bytes())?;
                    }
                    w.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, format: Format) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w, format)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read<R: BufRead>(r: &mut R, format: Format, lossy: bool) -> Result<Self> {
        match format {
            Format::Text => read_text(r),
            Format::Binary => read_binary(r, lossy),
        }
    }

    /// Load a file; `lossy` replaces invalid UTF-8 in binary-format words
    /// instead of failing.
    pub fn load(path: impl AsRef<Path>, format: Format, lossy: bool) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(&mut BufReader::new(file), format, lossy)
    }
}

/// Write one matrix of a trained model.
pub fn save<F: Real>(
    model: &ModelState<F>,
    vocab: &Vocabulary,
    side: Side,
    path: impl AsRef<Path>,
    format: Format,
) -> Result<()> {
    Embeddings::from_model(model, vocab, side).save(path, format)
}

pub fn load(path: impl AsRef<Path>, format: Format) -> Result<Embeddings> {
    Embeddings::load(path, format, false)
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let bad = || Error::Format(format!("bad header {:?}, expected \"<words> <dim>\"", line.trim_end()));
    let n = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let d: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    if parts.next().is_some() || d == 0 {
        return Err(bad());
    }
    Ok((n, d))
}

fn read_text<R: BufRead>(r: &mut R) -> Result<Embeddings> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(Error::Format("empty file".into()));
    }
    let (n, dim) = parse_header(&line)?;
    let mut words = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let mut lineno = 1;
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            break;
        }
        lineno += 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        if words.len() == n {
            return Err(Error::Parse {
                line: lineno,
                message: format!("more rows than the {n} declared"),
            });
        }
        let start = data.len();
        for field in fields {
            let v: f32 = field.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("row {} ({word}): bad number {field:?}", words.len() + 1),
            })?;
            data.push(v);
        }
        if data.len() - start != dim {
            return Err(Error::Parse {
                line: lineno,
                message: format!(
                    "row {} ({word}) has {} values, expected {dim}",
                    words.len() + 1,
                    data.len() - start
                ),
            });
        }
        words.push(word.to_owned());
    }
    if words.len() != n {
        return Err(Error::Parse {
            line: lineno,
            message: format!("file ends after {} of {n} rows", words.len()),
        });
    }
    Embeddings::new(words, dim, data)
}

fn read_binary<R: BufRead>(r: &mut R, lossy: bool) -> Result<Embeddings> {
    let mut header = Vec::new();
    if r.read_until(b'\n', &mut header)? == 0 {
        return Err(Error::Format("empty file".into()));
    }
    let (n, dim) = parse_header(&String::from_utf8_lossy(&header))?;
    let mut words = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let mut buf = vec![0u8; dim * 4];
    for row in 1..=n {
        let truncated = |what: &str| Error::Parse {
            line: row + 1,
            message: format!("row {row}: file truncated in {what}"),
        };
        let mut word = Vec::new();
        // the newline after the previous vector (and any stray whitespace)
        loop {
            let byte = r.fill_buf()?.first().copied();
            match byte {
                Some(b'\n' | b'\r' | b' ' | b'\t') => r.consume(1),
                Some(_) => break,
                None => return Err(truncated("word")),
            }
        }
        r.read_until(b' ', &mut word)?;
        if word.pop() != Some(b' ') {
            return Err(truncated("word"));
        }
        let word = match String::from_utf8(word) {
            Ok(w) => w,
            Err(e) if lossy => String::from_utf8_lossy(e.as_bytes()).into_owned(),
            Err(_) => {
                return Err(Error::Parse {
                    line: row + 1,
                    message: format!("row {row}: word is not valid UTF-8"),
                })
            }
        };
        r.read_exact(&mut buf).map_err(|_| truncated("vector"))?;
        data.extend(
            buf.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        words.push(word);
    }
    Embeddings::new(words, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn emb(words: &[&str], dim: usize, data: Vec<f32>) -> Embeddings {
        Embeddings::new(words.iter().map(|s| s.to_string()).collect(), dim, data).unwrap()
    }

    #[test]
    fn text_layout() {
        let e = emb(&["a"], 2, vec![0.0, 0.0]);
        let mut out = Vec::new();
        e.write(&mut out, Format::Text).unwrap();
        assert_eq!(out, b"1 2\na 0 0\n");

        let e = emb(&["x", "y"], 2, vec![0.5, -1.25, 1e-8, 3.0]);
        let mut out = Vec::new();
        e.write(&mut out, Format::Text).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "2 2\nx 0.5 -1.25\ny 0.00000001 3\n");
    }

    #[test]
    fn binary_layout() {
        let e = emb(&["ab"], 1, vec![1.0]);
        let mut out = Vec::new();
        e.write(&mut out, Format::Binary).unwrap();
        assert_eq!(out, b"1 1\nab \x00\x00\x80\x3f\n");
    }

    #[test]
    fn whitespace_words_rejected() {
        let e = emb(&["a b"], 1, vec![1.0]);
        assert!(matches!(
            e.write(&mut Vec::new(), Format::Text),
            Err(Error::WhitespaceInWord(_))
        ));
    }

    #[test]
    fn round_trips() {
        let data: Vec<f32> = (0..12).map(|i| (i as f32 * 0.731).sin() / 3.0).collect();
        let e = emb(&["one", "two", "three", "ünï"], 3, data);
        for format in [Format::Text, Format::Binary] {
            let mut out = Vec::new();
            e.write(&mut out, format).unwrap();
            let back = Embeddings::read(&mut Cursor::new(out), format, false).unwrap();
            assert_eq!(back, e, "{format:?}");
        }
    }

    #[test]
    fn crlf_text_is_accepted() {
        let text = b"2 2\r\na 1 2\r\nb 3 4\r\n";
        let e = Embeddings::read(&mut Cursor::new(&text[..]), Format::Text, false).unwrap();
        assert_eq!(e.words(), &["a", "b"]);
        assert_eq!(e.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn truncated_text_names_the_row() {
        let text = b"3 2\na 1 2\nb 3\n";
        match Embeddings::read(&mut Cursor::new(&text[..]), Format::Text, false) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("row 2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let text = b"3 2\na 1 2\nb 3 4\n";
        let err = Embeddings::read(&mut Cursor::new(&text[..]), Format::Text, false).unwrap_err();
        assert!(err.to_string().contains("2 of 3 rows"), "{err}");
    }

    #[test]
    fn truncated_binary_names_the_row() {
        let e = emb(&["a", "b"], 2, vec![1.0, 2.0, 3.0, 4.0]);
        let mut out = Vec::new();
        e.write(&mut out, Format::Binary).unwrap();
        out.truncate(out.len() - 3);
        let err = Embeddings::read(&mut Cursor::new(out), Format::Binary, false).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn header_disagreement_rejected() {
        let text = b"1 2\na 1 2\nb 3 4\n";
        assert!(Embeddings::read(&mut Cursor::new(&text[..]), Format::Text, false).is_err());
        assert!(Embeddings::read(&mut Cursor::new(&b"x 2\n"[..]), Format::Text, false).is_err());
        assert!(Embeddings::read(&mut Cursor::new(&b""[..]), Format::Binary, false).is_err());
    }

    #[test]
    fn non_utf8_binary_words() {
        let mut bytes = b"1 1\n\xffa ".to_vec();
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        bytes.push(b'\n');
        assert!(Embeddings::read(&mut Cursor::new(bytes.clone()), Format::Binary, false).is_err());
        let e = Embeddings::read(&mut Cursor::new(bytes), Format::Binary, true).unwrap();
        assert_eq!(e.words(), &["\u{fffd}a"]);
        assert_eq!(e.data(), &[2.0]);
    }
}
