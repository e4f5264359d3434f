//! Minimal tree walk over quick-xml events.

use quick_xml::escape::resolve_predefined_entity;
use quick_xml::events::Event;
use quick_xml::Reader;

use crate::error::{Error, Result};

/// A closed element: its ancestors' local names, attributes and the
/// concatenated text of its subtree.
pub(crate) struct Closed<'a> {
    pub path: &'a [String],
    pub name: &'a str,
    pub attrs: &'a [(String, String)],
    pub text: &'a str,
}

impl Closed<'_> {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// True when the element's parents end with `suffix`.
    pub fn under(&self, suffix: &[&str]) -> bool {
        self.path.len() >= suffix.len()
            && self.path[self.path.len() - suffix.len()..]
                .iter()
                .zip(suffix)
                .all(|(a, b)| a == b)
    }
}

struct Open {
    name: String,
    attrs: Vec<(String, String)>,
    text: String,
}

pub(crate) fn walk(xml: &str, context: &str, mut on_close: impl FnMut(Closed<'_>) -> Result<()>) -> Result<()> {
    let err = |e: &dyn std::fmt::Display| Error::parse(context, e);
    let mut reader = Reader::from_str(xml);
    let mut stack: Vec<Open> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    loop {
        match reader.read_event().map_err(|e| err(&e))? {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                let attrs = e
                    .attributes()
                    .map(|a| {
                        let a = a.map_err(|e| err(&e))?;
                        let k = String::from_utf8_lossy(a.key.local_name().as_ref()).into_owned();
                        let v = a.unescape_value().map_err(|e| err(&e))?.into_owned();
                        Ok((k, v))
                    })
                    .collect::<Result<Vec<_>>>()?;
                stack.push(Open {
                    name: name.clone(),
                    attrs,
                    text: String::new(),
                });
                names.push(name);
            }
            Event::Empty(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                let attrs = e
                    .attributes()
                    .filter_map(|a| a.ok())
                    .map(|a| {
                        (
                            String::from_utf8_lossy(a.key.local_name().as_ref()).into_owned(),
                            a.unescape_value().map(|v| v.into_owned()).unwrap_or_default(),
                        )
                    })
                    .collect::<Vec<_>>();
                on_close(Closed {
                    path: &names,
                    name: &name,
                    attrs: &attrs,
                    text: "",
                })?;
            }
            Event::Text(t) => {
                if let Some(top) = stack.last_mut() {
                    top.text.push_str(&t.decode().map_err(|e| err(&e))?);
                }
            }
            Event::CData(t) => {
                if let Some(top) = stack.last_mut() {
                    top.text.push_str(&t.decode().map_err(|e| err(&e))?);
                }
            }
            Event::GeneralRef(r) => {
                if let Some(top) = stack.last_mut() {
                    if let Some(c) = r.resolve_char_ref().map_err(|e| err(&e))? {
                        top.text.push(c);
                    } else {
                        let name = r.decode().map_err(|e| err(&e))?;
                        match resolve_predefined_entity(&name) {
                            Some(s) => top.text.push_str(s),
                            None => return Err(err(&format!("unknown entity &{name};"))),
                        }
                    }
                }
            }
            Event::End(_) => {
                let open = stack.pop().ok_or_else(|| err(&"unbalanced end tag"))?;
                names.pop();
                on_close(Closed {
                    path: &names,
                    name: &open.name,
                    attrs: &open.attrs,
                    text: &open.text,
                })?;
                if let Some(parent) = stack.last_mut() {
                    parent.text.push_str(&open.text);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(err(&"document ended inside an element"));
    }
    Ok(())
}

/// Collapses whitespace runs to single spaces.
pub(crate) fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_includes_children_and_entities() {
        let xml = r#"<a><b k="v &amp; w">x <i>y</i> &lt;z&gt; &#65;</b><c/></a>"#;
        let mut seen = Vec::new();
        walk(xml, "t", |c| {
            seen.push((c.path.join("/"), c.name.to_string(), c.attr("k").map(String::from), c.text.to_string()));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen[0], ("a/b".into(), "i".into(), None, "y".into()));
        assert_eq!(seen[1], ("a".into(), "b".into(), Some("v & w".into()), "x y <z> A".into()));
        assert_eq!(seen[2].1, "c");
        assert!(walk("<a><b></a>", "t", |_| Ok(())).is_err());
        assert_eq!(squash("  a \n\t b  "), "a b");
    }
}
