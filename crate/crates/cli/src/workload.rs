//! Workload files: one SQL statement per line, `#` starts a comment line.

/// A statement and its 1-based line number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkloadLine<'a> {
    pub line: usize,
    pub sql: &'a str,
}

pub fn parse_workload(text: &str) -> Vec<WorkloadLine<'_>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let sql = raw.trim().trim_end_matches(';').trim_end();
            (!sql.is_empty() && !sql.starts_with('#')).then_some(WorkloadLine { line: i + 1, sql })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn skips_blanks_and_comments() {
        let text = "# header\n\nSELECT COUNT(*) FROM a a;\n   # indented\n  SELECT COUNT(*) FROM b b  \n";
        let lines = parse_workload(text);
        assert_eq!(
            lines,
            [
                WorkloadLine {
                    line: 3,
                    sql: "SELECT COUNT(*) FROM a a"
                },
                WorkloadLine {
                    line: 5,
                    sql: "SELECT COUNT(*) FROM b b"
                },
            ]
        );
    }

    #[test]
    fn empty_file_has_no_statements() {
        assert!(parse_workload("").is_empty());
        assert!(parse_workload("# only\n\n#comments\n").is_empty());
    }

    proptest! {
        #[test]
        fn every_statement_line_survives(stmts in proptest::collection::vec("[A-Za-z(*) =<>0-9.]{1,30}", 0..20), comments in proptest::collection::vec(any::<bool>(), 0..20)) {
            let mut text = String::new();
            let mut expected = Vec::new();
            for (i, s) in stmts.iter().enumerate() {
                if comments.get(i).copied().unwrap_or(false) {
                    text.push_str("# skipped\n");
                }
                text.push_str(s);
                text.push('\n');
                let trimmed = s.trim();
                if !trimmed.is_empty() {
                    expected.push(trimmed.to_string());
                }
            }
            let got: Vec<String> = parse_workload(&text).iter().map(|l| l.sql.to_string()).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
