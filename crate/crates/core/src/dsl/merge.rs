use super::ast::{Assign, Block, Document, Entry, Value};
use super::DslError;

fn root_block(doc: &mut Document) -> Option<&mut Block> {
    match doc.entries.as_mut_slice() {
        [Entry::Assign(Assign {
            value: Value::Ctor(c),
            ..
        })] => c.block.as_mut(),
        _ => None,
    }
}

fn is_root(doc: &Document) -> bool {
    matches!(
        doc.entries.as_slice(),
        [Entry::Assign(Assign { value: Value::Ctor(c), .. })] if c.block.is_some()
    )
}

fn block_mut(entry: &mut Entry) -> Option<&mut Block> {
    match entry {
        Entry::Assign(Assign {
            value: Value::Block(b),
            ..
        }) => Some(b),
        Entry::Assign(Assign {
            value: Value::Ctor(c),
            ..
        }) => c.block.as_mut(),
        _ => None,
    }
}

fn entry_name(entry: &Entry) -> Option<&str> {
    match entry {
        Entry::Assign(a) => Some(&a.name),
        Entry::Loop(_) => None,
    }
}

/// Combine a full configuration with fragments. Exactly one document must
/// be a full configuration; each fragment's top-level blocks are appended
/// to the root's blocks of the same name (`nodes`, `services`), and any
/// other fragment entry is appended to the root block.
pub fn merge(docs: Vec<Document>) -> Result<Document, DslError> {
    let mut roots = docs.iter().filter(|d| is_root(d)).map(|d| d.source.to_string());
    let Some(first) = roots.next() else {
        return Err(DslError::NoRoot {
            sources: docs.iter().map(|d| d.source.to_string()).collect(),
        });
    };
    if let Some(second) = roots.next() {
        return Err(DslError::MultipleRoots { first, second });
    }
    let mut root = None;
    let mut fragments = Vec::new();
    for d in docs {
        if is_root(&d) && root.is_none() {
            root = Some(d);
        } else {
            fragments.push(d);
        }
    }
    let mut root = root.expect("counted above");
    let body = root_block(&mut root).expect("is_root");
    for frag in fragments {
        for mut entry in frag.entries {
            let target = entry_name(&entry).and_then(|name| {
                body.entries
                    .iter_mut()
                    .find(|e| entry_name(e) == Some(name))
                    .and_then(block_mut)
            });
            match (target, block_mut(&mut entry)) {
                (Some(t), Some(src)) => t.entries.append(&mut src.entries),
                _ => body.entries.push(entry),
            }
        }
    }
    Ok(root)
}
