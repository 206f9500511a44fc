//! PDF text and image extraction via `lopdf`.

use lopdf::{Document as Pdf, Object};

use super::{IngestError, RawDocument, RawPage};

fn info_string(pdf: &Pdf, key: &[u8]) -> Option<String> {
    let info = match pdf.trailer.get(b"Info").ok()? {
        Object::Reference(id) => pdf.get_object(*id).ok()?.as_dict().ok()?,
        Object::Dictionary(d) => d,
        _ => return None,
    };
    match info.get(key).ok()? {
        Object::String(bytes, _) => {
            let s = if bytes.starts_with(&[0xfe, 0xff]) {
                let units: Vec<u16> = bytes[2..].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
                String::from_utf16_lossy(&units)
            } else {
                String::from_utf8_lossy(bytes).into_owned()
            };
            let s = s.trim().to_string();
            (!s.is_empty()).then_some(s)
        }
        _ => None,
    }
}

/// One page per PDF page. Embedded JPEG images (DCT-encoded XObjects) are
/// extracted as-is; other image encodings are skipped.
pub fn pdf(bytes: &[u8]) -> Result<RawDocument, IngestError> {
    let pdf = Pdf::load_mem(bytes).map_err(|e| IngestError::Parse { page: None, message: format!("pdf: {e}") })?;
    let mut pages = Vec::new();
    for (number, id) in pdf.get_pages() {
        let text = pdf
            .extract_text(&[number])
            .map_err(|e| IngestError::Parse { page: Some(number), message: e.to_string() })?;
        let text = text.lines().map(str::trim_end).collect::<Vec<_>>().join("\n").trim().to_string();
        let images = pdf
            .get_page_images(id)
            .unwrap_or_default()
            .into_iter()
            .filter(|img| img.filters.as_ref().is_some_and(|f| f.iter().any(|x| x == "DCTDecode")))
            .map(|img| img.content.to_vec())
            .collect();
        pages.push(RawPage { text, images });
    }
    Ok(RawDocument {
        title: info_string(&pdf, b"Title"),
        author: info_string(&pdf, b"Author"),
        created_at: info_string(&pdf, b"CreationDate"),
        tags: vec![],
        pages,
    })
}
