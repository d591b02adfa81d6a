//! Parsers for the official CDC/NCHS ICD-10-CM XML releases.
//!
//! The tabular file nests `chapter > section > diag > diag ...`; chapters
//! and sections have no code of their own, so they get synthetic span ids
//! built from the code range they cover (`I10-I16` becomes `I10I16`, a
//! single-category section `Y93` becomes `Y93Y93`). The index file nests
//! `mainTerm > term` entries whose `code` children cross-reference the
//! tabular list; an edge is drawn from each term's code to the nearest
//! enclosing term that also carries a code, and between codes listed in
//! the same term.

use std::io::BufRead;

use quick_xml::events::Event;
use quick_xml::Reader;

use super::tsv::IndexParse;
use super::{CodeId, CodeKind, GraphError, IndexGraph, TabularTree, TreeBuilder};

fn parse_locus(position: u64) -> String {
    format!("byte {position}")
}

#[derive(Debug)]
struct DiagFrame {
    name: Option<String>,
    desc: Option<String>,
    children: Vec<DiagTree>,
    locus: String,
}

#[derive(Debug)]
struct DiagTree {
    name: String,
    desc: String,
    children: Vec<DiagTree>,
    locus: String,
}

#[derive(Debug)]
struct SectionFrame {
    id: String,
    diags: Vec<DiagTree>,
    desc: Option<String>,
    locus: String,
}

#[derive(Debug)]
struct ChapterFrame {
    desc: Option<String>,
    sections: Vec<SectionFrame>,
    locus: String,
}

/// Split a section id such as `A00-A09` (or a bare `Y93`) into its
/// normalized start and end codes.
fn span_of(id: &str, locus: &str) -> Result<(CodeId, CodeId), GraphError> {
    let mut parts = id.splitn(2, '-');
    let start = parts.next().unwrap_or_default();
    let end = parts.next().unwrap_or(start);
    let mk = |raw: &str| {
        CodeId::new(raw).map_err(|e| GraphError::Parse {
            locus: locus.to_string(),
            message: format!("section range {id:?}: {e}"),
        })
    };
    Ok((mk(start)?, mk(end)?))
}

fn span_id(start: &CodeId, end: &CodeId, locus: &str) -> Result<CodeId, GraphError> {
    CodeId::new(&format!("{start}{end}")).map_err(|e| GraphError::Parse {
        locus: locus.to_string(),
        message: format!("cannot build span id: {e}"),
    })
}

pub fn parse_tabular_xml<R: BufRead>(source: R) -> Result<TabularTree, GraphError> {
    let mut reader = Reader::from_reader(source);
    reader.config_mut().trim_text(true);

    let mut builder = TreeBuilder::new();
    let mut buf = Vec::new();
    let mut element_stack: Vec<String> = Vec::new();
    let mut chapter: Option<ChapterFrame> = None;
    let mut diag_stack: Vec<DiagFrame> = Vec::new();
    let mut saw_any = false;

    loop {
        let position = reader.buffer_position();
        match reader.read_event_into(&mut buf) {
            Err(e) => {
                return Err(GraphError::Parse {
                    locus: parse_locus(position),
                    message: e.to_string(),
                })
            }
            Ok(Event::Eof) => break,
            Ok(Event::Start(ref e)) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).to_string();
                match tag.as_str() {
                    "chapter" => {
                        chapter = Some(ChapterFrame {
                            desc: None,
                            sections: Vec::new(),
                            locus: parse_locus(position),
                        });
                    }
                    "section" if chapter.is_some() => {
                        let id = e
                            .try_get_attribute("id")
                            .ok()
                            .flatten()
                            .map(|a| String::from_utf8_lossy(&a.value).to_string())
                            .ok_or_else(|| GraphError::Parse {
                                locus: parse_locus(position),
                                message: "section without id attribute".into(),
                            })?;
                        chapter.as_mut().expect("checked is_some").sections.push(
                            SectionFrame {
                                id,
                                diags: Vec::new(),
                                desc: None,
                                locus: parse_locus(position),
                            },
                        );
                    }
                    "diag" if chapter.is_some() => {
                        diag_stack.push(DiagFrame {
                            name: None,
                            desc: None,
                            children: Vec::new(),
                            locus: parse_locus(position),
                        });
                    }
                    _ => {}
                }
                element_stack.push(tag);
            }
            Ok(Event::Empty(_)) => {}
            Ok(Event::Text(ref t)) => {
                let parent = element_stack.last().map(String::as_str);
                if !matches!(parent, Some("name") | Some("desc")) {
                    buf.clear();
                    continue;
                }
                let container = element_stack
                    .iter()
                    .rev()
                    .nth(1)
                    .map(String::as_str)
                    .unwrap_or_default()
                    .to_string();
                let text = t
                    .unescape()
                    .map_err(|e| GraphError::Parse {
                        locus: parse_locus(position),
                        message: e.to_string(),
                    })?
                    .to_string();
                match (parent, container.as_str()) {
                    (Some("desc"), "chapter") => {
                        if let Some(ch) = chapter.as_mut() {
                            ch.desc.get_or_insert(text);
                        }
                    }
                    (Some("desc"), "section") => {
                        if let Some(sec) =
                            chapter.as_mut().and_then(|ch| ch.sections.last_mut())
                        {
                            sec.desc.get_or_insert(text);
                        }
                    }
                    (Some("name"), "diag") => {
                        if let Some(d) = diag_stack.last_mut() {
                            d.name.get_or_insert(text);
                        }
                    }
                    (Some("desc"), "diag") => {
                        if let Some(d) = diag_stack.last_mut() {
                            d.desc.get_or_insert(text);
                        }
                    }
                    _ => {}
                }
            }
            Ok(Event::End(ref e)) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).to_string();
                element_stack.pop();
                match tag.as_str() {
                    "diag" => {
                        if let Some(frame) = diag_stack.pop() {
                            let done = DiagTree {
                                name: frame.name.unwrap_or_default(),
                                desc: frame.desc.unwrap_or_default(),
                                children: frame.children,
                                locus: frame.locus,
                            };
                            if done.name.is_empty() {
                                return Err(GraphError::Parse {
                                    locus: done.locus,
                                    message: "diag element without a name".into(),
                                });
                            }
                            if let Some(parent) = diag_stack.last_mut() {
                                parent.children.push(done);
                            } else if let Some(sec) =
                                chapter.as_mut().and_then(|ch| ch.sections.last_mut())
                            {
                                sec.diags.push(done);
                            }
                        }
                    }
                    "chapter" => {
                        if let Some(frame) = chapter.take() {
                            saw_any = true;
                            emit_chapter(&mut builder, frame)?;
                        }
                    }
                    _ => {}
                }
            }
            Ok(_) => {}
        }
        buf.clear();
    }

    if !saw_any {
        return Err(GraphError::EmptySource);
    }
    builder.finish()
}

fn emit_chapter(builder: &mut TreeBuilder, chapter: ChapterFrame) -> Result<(), GraphError> {
    if chapter.sections.is_empty() {
        return Ok(());
    }
    let (first_start, _) = span_of(&chapter.sections[0].id, &chapter.locus)?;
    let (_, last_end) = span_of(
        &chapter.sections[chapter.sections.len() - 1].id,
        &chapter.locus,
    )?;
    let chapter_id = span_id(&first_start, &last_end, &chapter.locus)?;

    // A single-section chapter would give the chapter and its block the
    // same span id; the block level is redundant there, so the lone block
    // becomes a root of its own.
    let parent = if chapter.sections.len() == 1 {
        None
    } else {
        builder.add(
            chapter_id.clone(),
            None,
            chapter.desc.unwrap_or_default(),
            CodeKind::Chapter,
            chapter.locus.clone(),
        )?;
        Some(chapter_id)
    };

    for section in chapter.sections {
        let (start, end) = span_of(&section.id, &section.locus)?;
        let block_id = span_id(&start, &end, &section.locus)?;
        match &parent {
            Some(chapter_id) => builder.add(
                block_id.clone(),
                Some(chapter_id.clone()),
                section.desc.unwrap_or_default(),
                CodeKind::Block,
                section.locus.clone(),
            )?,
            None => builder.add(
                block_id.clone(),
                None,
                section.desc.unwrap_or_default(),
                CodeKind::Block,
                section.locus.clone(),
            )?,
        }
        for diag in section.diags {
            emit_diag(builder, diag, &block_id, CodeKind::Category)?;
        }
    }
    Ok(())
}

fn emit_diag(
    builder: &mut TreeBuilder,
    diag: DiagTree,
    parent: &CodeId,
    kind: CodeKind,
) -> Result<(), GraphError> {
    let id = CodeId::new(&diag.name).map_err(|e| GraphError::Parse {
        locus: diag.locus.clone(),
        message: e.to_string(),
    })?;
    builder.add(
        id.clone(),
        Some(parent.clone()),
        diag.desc,
        kind,
        diag.locus,
    )?;
    for child in diag.children {
        emit_diag(builder, child, &id, CodeKind::Subcategory)?;
    }
    Ok(())
}

/// Normalize a code string as it appears in the index list, where a
/// trailing dash marks a seventh-character placeholder (`S06.0X0-`).
fn index_code(raw: &str) -> Result<CodeId, GraphError> {
    CodeId::new(raw.trim_end_matches('-'))
}

pub fn parse_index_xml<R: BufRead>(source: R) -> Result<IndexParse, GraphError> {
    let mut reader = Reader::from_reader(source);
    reader.config_mut().trim_text(true);

    let mut graph = IndexGraph::new();
    let mut warnings = Vec::new();
    let mut buf = Vec::new();
    let mut element_stack: Vec<String> = Vec::new();
    // One code list per enclosing mainTerm/term frame.
    let mut term_codes: Vec<Vec<CodeId>> = Vec::new();

    loop {
        let position = reader.buffer_position();
        match reader.read_event_into(&mut buf) {
            Err(e) => {
                return Err(GraphError::Parse {
                    locus: parse_locus(position),
                    message: e.to_string(),
                })
            }
            Ok(Event::Eof) => break,
            Ok(Event::Start(ref e)) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).to_string();
                if tag == "mainTerm" || tag == "term" {
                    term_codes.push(Vec::new());
                }
                element_stack.push(tag);
            }
            Ok(Event::Text(ref t)) => {
                if element_stack.last().map(String::as_str) == Some("code") {
                    let raw = t
                        .unescape()
                        .map_err(|e| GraphError::Parse {
                            locus: parse_locus(position),
                            message: e.to_string(),
                        })?
                        .to_string();
                    match index_code(&raw) {
                        Ok(code) => {
                            if let Some(frame) = term_codes.last_mut() {
                                frame.push(code);
                            }
                        }
                        Err(e) => {
                            warnings.push(format!("{}: edge dropped: {e}", parse_locus(position)))
                        }
                    }
                }
            }
            Ok(Event::End(ref e)) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).to_string();
                element_stack.pop();
                if tag == "mainTerm" || tag == "term" {
                    if let Some(codes) = term_codes.pop() {
                        // Codes sharing a term are alternative namings.
                        for pair in codes.windows(2) {
                            link(&mut graph, &mut warnings, &pair[0], &pair[1]);
                        }
                        // Link to the nearest enclosing term with a code.
                        if let (Some(first), Some(anchor)) = (
                            codes.first(),
                            term_codes
                                .iter()
                                .rev()
                                .find_map(|frame| frame.first()),
                        ) {
                            link(&mut graph, &mut warnings, first, anchor);
                        }
                    }
                }
            }
            Ok(_) => {}
        }
        buf.clear();
    }

    Ok(IndexParse { graph, warnings })
}

fn link(graph: &mut IndexGraph, warnings: &mut Vec<String>, a: &CodeId, b: &CodeId) {
    if a == b {
        warnings.push(format!("self-loop on {a} dropped"));
        return;
    }
    graph.add_edge(a.clone(), b.clone());
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABULAR: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<ICD10CM.tabular>
  <version>2026</version>
  <introduction>
    <introSection><title>How to use</title><para>Not code content.</para></introSection>
  </introduction>
  <chapter>
    <name>9</name>
    <desc>Diseases of the circulatory system (I00-I99)</desc>
    <section id="I10-I16">
      <desc>Hypertensive diseases</desc>
      <diag>
        <name>I10</name>
        <desc>Essential (primary) hypertension</desc>
        <inclusionTerm><note>high blood pressure</note></inclusionTerm>
      </diag>
      <diag>
        <name>I11</name>
        <desc>Hypertensive heart disease</desc>
        <diag>
          <name>I11.0</name>
          <desc>Hypertensive heart disease with heart failure</desc>
        </diag>
        <diag>
          <name>I11.9</name>
          <desc>Hypertensive heart disease without heart failure</desc>
        </diag>
      </diag>
    </section>
  </chapter>
</ICD10CM.tabular>
"#;

    #[test]
    fn parses_chapter_section_diag_nesting() {
        let tree = parse_tabular_xml(TABULAR.as_bytes()).unwrap();
        let i110 = CodeId::new("I110").unwrap();
        let i11 = CodeId::new("I11").unwrap();
        let block = CodeId::new("I10I16").unwrap();

        assert!(tree.is_billable(&i110));
        assert!(tree.is_billable(&CodeId::new("I10").unwrap()));
        assert!(!tree.is_billable(&i11));
        assert_eq!(
            tree.node(&i110).unwrap().description,
            "Hypertensive heart disease with heart failure"
        );
        assert_eq!(tree.node(&i11).unwrap().parent.as_ref(), Some(&block));
        assert_eq!(tree.node(&i11).unwrap().depth, 0);
        assert_eq!(tree.node(&i110).unwrap().depth, 1);
        // Single-section chapter: the block itself is the root.
        assert_eq!(tree.roots(), &[block]);
    }

    #[test]
    fn inclusion_notes_do_not_leak_into_descriptions() {
        let tree = parse_tabular_xml(TABULAR.as_bytes()).unwrap();
        let i10 = CodeId::new("I10").unwrap();
        assert_eq!(
            tree.node(&i10).unwrap().description,
            "Essential (primary) hypertension"
        );
    }

    const INDEX: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<ICD10CM.index>
  <letter>
    <title>P</title>
    <mainTerm>
      <title>Pain</title>
      <code>R52</code>
      <term level="1">
        <title>knee</title>
        <code>M25.56-</code>
        <term level="2">
          <title>right</title>
          <code>M25.561</code>
        </term>
      </term>
      <term level="1">
        <title>broken</title>
        <code>bad--code</code>
      </term>
    </mainTerm>
  </letter>
</ICD10CM.index>
"#;

    #[test]
    fn index_links_terms_to_enclosing_terms() {
        let parsed = parse_index_xml(INDEX.as_bytes()).unwrap();
        let r52 = CodeId::new("R52").unwrap();
        let m2556 = CodeId::new("M2556").unwrap();
        let m25561 = CodeId::new("M25561").unwrap();
        assert!(parsed.graph.adjacent(&r52).unwrap().contains(&m2556));
        assert!(parsed.graph.adjacent(&m2556).unwrap().contains(&m25561));
        assert_eq!(parsed.graph.edge_count(), 2);
        assert_eq!(parsed.warnings.len(), 1, "bad code collected as warning");
    }
}
