//! Detection-log reading and writing.
//!
//! CSV logs carry the header `camera,object,frame,x,y,w,h,embedding` followed
//! by one row per detection; the `embedding` column may be empty. JSONL logs
//! hold one object per line with the same keys (`embedding` may be `null` or
//! absent).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::types::{BBox, CameraId, Detection, ObjectId};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = ["camera", "object", "frame", "x", "y", "w", "h", "embedding"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Jsonl,
}

impl LogFormat {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => LogFormat::Jsonl,
            _ => LogFormat::Csv,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    camera: u32,
    object: u64,
    frame: u64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    #[serde(default)]
    embedding: Option<usize>,
}

/// Checks applied to every parsed record.
#[derive(Debug, Default)]
struct Validator {
    n_cameras: Option<usize>,
    last_frame: HashMap<CameraId, u64>,
}

impl Validator {
    fn check(&mut self, det: &Detection, line: usize) -> Result<()> {
        if !(det.bbox.w > 0.0 && det.bbox.h > 0.0) {
            return Err(Error::validation(
                Some(line),
                format!("bbox width and height must be positive (w={}, h={})", det.bbox.w, det.bbox.h),
            ));
        }
        if !det.bbox.is_valid() {
            return Err(Error::validation(Some(line), "bbox has non-finite coordinates"));
        }
        if let Some(n) = self.n_cameras {
            if det.camera.index() >= n {
                return Err(Error::validation(
                    Some(line),
                    format!("unknown camera {} (network has {n} cameras)", det.camera.0),
                ));
            }
        }
        let last = self.last_frame.entry(det.camera).or_insert(det.frame);
        if det.frame < *last {
            return Err(Error::validation(
                Some(line),
                format!(
                    "frame {} precedes frame {} already seen for camera {}",
                    det.frame, *last, det.camera.0
                ),
            ));
        }
        *last = det.frame;
        Ok(())
    }
}

/// Parses a detection log. When `n_cameras` is given, camera indices at or
/// above it are rejected. Frames must be non-decreasing per camera.
pub fn parse_detection_log<R: Read>(
    source: R,
    format: LogFormat,
    n_cameras: Option<usize>,
) -> Result<Vec<Detection>> {
    let mut validator = Validator {
        n_cameras,
        ..Default::default()
    };
    match format {
        LogFormat::Csv => parse_csv(source, &mut validator),
        LogFormat::Jsonl => parse_jsonl(source, &mut validator),
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, line: usize) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {name} value {field:?}"),
    })
}

fn parse_csv<R: Read>(source: R, validator: &mut Validator) -> Result<Vec<Detection>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut seen_header = false;
    loop {
        let more = reader.read_record(&mut record).map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if !seen_header {
            seen_header = true;
            let header: Vec<&str> = record.iter().collect();
            if header != CSV_HEADER {
                return Err(Error::Parse {
                    line,
                    message: format!("expected header {:?}, found {:?}", CSV_HEADER.join(","), header.join(",")),
                });
            }
            continue;
        }
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let embedding = match record[7].trim() {
            "" => None,
            s => Some(parse_field::<usize>(s, "embedding", line)?),
        };
        let det = Detection {
            camera: CameraId(parse_field(&record[0], "camera", line)?),
            object_id: ObjectId(parse_field(&record[1], "object", line)?),
            frame: parse_field(&record[2], "frame", line)?,
            bbox: BBox {
                x: parse_field(&record[3], "x", line)?,
                y: parse_field(&record[4], "y", line)?,
                w: parse_field(&record[5], "w", line)?,
                h: parse_field(&record[6], "h", line)?,
            },
            embedding_ref: embedding,
        };
        validator.check(&det, line)?;
        out.push(det);
    }
    Ok(out)
}

fn parse_jsonl<R: Read>(source: R, validator: &mut Validator) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let det = Detection {
            camera: CameraId(rec.camera),
            object_id: ObjectId(rec.object),
            frame: rec.frame,
            bbox: BBox::new(rec.x, rec.y, rec.w, rec.h),
            embedding_ref: rec.embedding,
        };
        validator.check(&det, line_no)?;
        out.push(det);
    }
    Ok(out)
}

/// Writes detections in the given format. Output parses back to the same
/// detections.
pub fn write_detection_log<W: Write>(sink: W, detections: &[Detection], format: LogFormat) -> Result<()> {
    match format {
        LogFormat::Csv => {
            let mut writer = csv::Writer::from_writer(sink);
            writer.write_record(CSV_HEADER)?;
            for d in detections {
                writer.write_record([
                    d.camera.0.to_string(),
                    d.object_id.0.to_string(),
                    d.frame.to_string(),
                    d.bbox.x.to_string(),
                    d.bbox.y.to_string(),
                    d.bbox.w.to_string(),
                    d.bbox.h.to_string(),
                    d.embedding_ref.map(|e| e.to_string()).unwrap_or_default(),
                ])?;
            }
            writer.flush()?;
        }
        LogFormat::Jsonl => {
            let mut sink = sink;
            for d in detections {
                let rec = JsonRecord {
                    camera: d.camera.0,
                    object: d.object_id.0,
                    frame: d.frame,
                    x: d.bbox.x,
                    y: d.bbox.y,
                    w: d.bbox.w,
                    h: d.bbox.h,
                    embedding: d.embedding_ref,
                };
                serde_json::to_writer(&mut sink, &rec)?;
                sink.write_all(b"\n")?;
            }
            sink.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "camera,object,frame,x,y,w,h,embedding\n";

    fn parse(text: &str) -> Result<Vec<Detection>> {
        parse_detection_log(text.as_bytes(), LogFormat::Csv, None)
    }

    #[test]
    fn maps_csv_fields() {
        let dets = parse(&format!("{HEADER}0,42,1500,100,200,50,80,7\n")).unwrap();
        assert_eq!(
            dets,
            vec![Detection {
                camera: CameraId(0),
                object_id: ObjectId(42),
                frame: 1500,
                bbox: BBox::new(100.0, 200.0, 50.0, 80.0),
                embedding_ref: Some(7),
            }]
        );
    }

    #[test]
    fn empty_inputs_give_empty_lists() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse(HEADER).unwrap().is_empty());
        assert!(parse_detection_log(&b""[..], LogFormat::Jsonl, None).unwrap().is_empty());
    }

    #[test]
    fn zero_width_is_rejected_at_its_line() {
        let err = parse(&format!("{HEADER}0,1,1,0,0,5,5,\n0,1,2,0,0,0,5,\n")).unwrap_err();
        assert!(matches!(err, Error::Validation { line: Some(3), .. }), "{err}");
    }

    #[test]
    fn negative_height_is_rejected() {
        let err = parse(&format!("{HEADER}0,1,1,0,0,5,-2,\n")).unwrap_err();
        assert!(matches!(err, Error::Validation { line: Some(2), .. }));
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let err = parse(&format!("{HEADER}0,1,1,0,0,5,5,\n0,1,abc,0,0,5,5,\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse(&format!("{HEADER}0,1,1,0,0\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_camera_is_rejected() {
        let text = format!("{HEADER}3,1,1,0,0,5,5,\n");
        let err = parse_detection_log(text.as_bytes(), LogFormat::Csv, Some(3)).unwrap_err();
        assert!(matches!(err, Error::Validation { line: Some(2), .. }));
        assert!(parse_detection_log(text.as_bytes(), LogFormat::Csv, Some(4)).is_ok());
    }

    #[test]
    fn frames_must_not_go_backwards_within_a_camera() {
        let ok = format!("{HEADER}0,1,5,0,0,5,5,\n1,1,2,0,0,5,5,\n0,2,5,0,0,5,5,\n");
        assert!(parse(&ok).is_ok());
        let bad = format!("{HEADER}0,1,5,0,0,5,5,\n0,2,4,0,0,5,5,\n");
        assert!(matches!(parse(&bad).unwrap_err(), Error::Validation { line: Some(3), .. }));
    }

    #[test]
    fn jsonl_accepts_missing_embedding() {
        let text = "{\"camera\":1,\"object\":9,\"frame\":3,\"x\":1.5,\"y\":2,\"w\":3,\"h\":4}\n\n";
        let dets = parse_detection_log(text.as_bytes(), LogFormat::Jsonl, None).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].embedding_ref, None);
        assert_eq!(dets[0].bbox.x, 1.5);
    }

    #[test]
    fn wrong_header_is_a_parse_error() {
        assert!(matches!(parse("a,b,c\n"), Err(Error::Parse { line: 1, .. })));
    }
}
