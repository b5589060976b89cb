//! Register words sent to the canceller box over SPI and the bus timing model.
//!
//! Word layout, version [`LAYOUT_VERSION`]:
//!
//! ```text
//! ATT   2 bytes  [1100_0000] [0ddd_dddd]            d = attenuator code (7 bit)
//! PS    2 bytes  [01mm_dddd] [dddd_pppp]            DAC frame: m = mode (00 normal),
//!                                                   d = 8-bit DAC sample, p = padding
//! CAPi  1 byte   [sss_ddddd]                        s = 001/010/100 for CAP1/2/3,
//!                                                   d = capacitor code (5 bit)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::canceller::{CancellerCode, ATT_CODE_MAX};
use crate::channel::CAP_CODE_MAX;
use crate::error::{domain, Error, Result};

pub const LAYOUT_VERSION: u32 = 1;

const ATT_ADDR: u8 = 0b1100_0000;
const PS_ADDR: u16 = 0b01 << 14;
const DAC_MODE_NORMAL: u16 = 0b00 << 12;
const CAP_SELECT: [u8; 3] = [0b001 << 5, 0b010 << 5, 0b100 << 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpiTarget {
    Att,
    PsDac,
    Cap1,
    Cap2,
    Cap3,
}

impl SpiTarget {
    pub const ALL: [SpiTarget; 5] =
        [SpiTarget::Att, SpiTarget::PsDac, SpiTarget::Cap1, SpiTarget::Cap2, SpiTarget::Cap3];

    pub fn max_code(self) -> u8 {
        match self {
            SpiTarget::Att => ATT_CODE_MAX,
            SpiTarget::PsDac => u8::MAX,
            _ => CAP_CODE_MAX,
        }
    }

    pub fn word_len(self) -> usize {
        match self {
            SpiTarget::Att | SpiTarget::PsDac => 2,
            _ => 1,
        }
    }

    fn label(self) -> &'static str {
        match self {
            SpiTarget::Att => "ATT",
            SpiTarget::PsDac => "PS",
            SpiTarget::Cap1 => "CAP1",
            SpiTarget::Cap2 => "CAP2",
            SpiTarget::Cap3 => "CAP3",
        }
    }
}

impl fmt::Display for SpiTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SpiTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SpiTarget::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::Parse(format!("unknown SPI target {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpiWord {
    pub target: SpiTarget,
    pub bytes: Vec<u8>,
}

pub fn encode_word(target: SpiTarget, code: u8) -> Result<SpiWord> {
    if code > target.max_code() {
        return Err(domain(format!("{target} code {code} outside 0..={}", target.max_code())));
    }
    let bytes = match target {
        SpiTarget::Att => vec![ATT_ADDR, code & 0x7F],
        SpiTarget::PsDac => {
            let frame = PS_ADDR | DAC_MODE_NORMAL | ((code as u16) << 4);
            frame.to_be_bytes().to_vec()
        }
        SpiTarget::Cap1 => vec![CAP_SELECT[0] | (code & 0x1F)],
        SpiTarget::Cap2 => vec![CAP_SELECT[1] | (code & 0x1F)],
        SpiTarget::Cap3 => vec![CAP_SELECT[2] | (code & 0x1F)],
    };
    Ok(SpiWord { target, bytes })
}

/// Recovers `(target, code)` from the word bytes alone; the declared target
/// must agree.
pub fn decode_word(word: &SpiWord) -> Result<(SpiTarget, u8)> {
    let (target, code) = decode_bytes(&word.bytes)?;
    if target != word.target {
        return Err(Error::Parse(format!("word bytes address {target}, declared {}", word.target)));
    }
    Ok((target, code))
}

pub fn decode_bytes(bytes: &[u8]) -> Result<(SpiTarget, u8)> {
    match *bytes {
        [b0, b1] if b0 == ATT_ADDR && b1 & 0x80 == 0 => Ok((SpiTarget::Att, b1)),
        [b0, b1] => {
            let frame = u16::from_be_bytes([b0, b1]);
            if frame & 0xF000 != PS_ADDR | DAC_MODE_NORMAL || frame & 0x000F != 0 {
                return Err(Error::Parse(format!("not a valid 2-byte word: {b0:02X} {b1:02X}")));
            }
            Ok((SpiTarget::PsDac, ((frame >> 4) & 0xFF) as u8))
        }
        [b] => {
            let sel = b & 0xE0;
            let idx = CAP_SELECT
                .iter()
                .position(|&s| s == sel)
                .ok_or_else(|| Error::Parse(format!("not a valid capacitor word: {b:02X}")))?;
            let target = [SpiTarget::Cap1, SpiTarget::Cap2, SpiTarget::Cap3][idx];
            Ok((target, b & 0x1F))
        }
        _ => Err(Error::Parse(format!("SPI words are 1 or 2 bytes, got {}", bytes.len()))),
    }
}

/// Words in programming order: ATT, PS, CAP1, CAP2, CAP3.
pub fn encode_config(code: &CancellerCode) -> Result<Vec<SpiWord>> {
    code.validate()?;
    Ok(vec![
        encode_word(SpiTarget::Att, code.att)?,
        encode_word(SpiTarget::PsDac, code.ps)?,
        encode_word(SpiTarget::Cap1, code.caps[0])?,
        encode_word(SpiTarget::Cap2, code.caps[1])?,
        encode_word(SpiTarget::Cap3, code.caps[2])?,
    ])
}

pub fn word_bits(words: &[SpiWord]) -> u64 {
    words.iter().map(|w| 8 * w.bytes.len() as u64).sum()
}

pub fn transfer_time_us(words: &[SpiWord], clock_hz: f64) -> Result<f64> {
    if !(clock_hz > 0.0) {
        return Err(domain(format!("SPI clock must be positive, got {clock_hz}")));
    }
    Ok(word_bits(words) as f64 * 1e6 / clock_hz)
}

pub const DEFAULT_SPI_CLOCK_HZ: f64 = 8e6;

/// One word per line: `<TARGET> <HEX> [<HEX>]`.
pub fn hex_dump(words: &[SpiWord]) -> String {
    let mut out = String::new();
    for w in words {
        out.push_str(w.target.label());
        for b in &w.bytes {
            out.push_str(&format!(" {b:02X}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_hex_dump(text: &str) -> Result<Vec<SpiWord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut it = line.split_whitespace();
            let target: SpiTarget = it.next().unwrap_or_default().parse()?;
            let bytes = it
                .map(|h| u8::from_str_radix(h, 16).map_err(|e| Error::Parse(format!("{h:?}: {e}"))))
                .collect::<Result<Vec<u8>>>()?;
            let word = SpiWord { target, bytes };
            decode_word(&word)?;
            Ok(word)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn att_examples() {
        assert_eq!(encode_word(SpiTarget::Att, 0).unwrap().bytes, vec![0xC0, 0x00]);
        assert_eq!(encode_word(SpiTarget::Att, 30).unwrap().bytes[1], 0x1E);
        assert!(encode_word(SpiTarget::Att, 128).is_err());
    }

    #[test]
    fn ps_full_scale_sets_all_data_bits() {
        let w = encode_word(SpiTarget::PsDac, 255).unwrap();
        let frame = u16::from_be_bytes([w.bytes[0], w.bytes[1]]);
        assert_eq!((frame >> 4) & 0xFF, 0xFF);
        assert_eq!(frame & 0x3000, 0, "normal-operation mode bits");
        assert_eq!(frame & 0x000F, 0, "padding");
    }

    #[test]
    fn cap_words_are_single_byte() {
        for t in [SpiTarget::Cap1, SpiTarget::Cap2, SpiTarget::Cap3] {
            assert_eq!(encode_word(t, 31).unwrap().bytes.len(), 1);
            assert!(encode_word(t, 32).is_err());
        }
    }

    #[test]
    fn timing() {
        let att = encode_word(SpiTarget::Att, 1).unwrap();
        let cap = encode_word(SpiTarget::Cap2, 1).unwrap();
        assert_eq!(transfer_time_us(std::slice::from_ref(&att), 8e6).unwrap(), 2.0);
        assert_eq!(transfer_time_us(std::slice::from_ref(&cap), 8e6).unwrap(), 1.0);
        let all = encode_config(&CancellerCode::PAPER_PROFILE).unwrap();
        assert_eq!(transfer_time_us(&all, 8e6).unwrap(), 7.0);
        assert!(transfer_time_us(&all, 0.0).is_err());
    }

    #[test]
    fn declared_target_must_match() {
        let mut w = encode_word(SpiTarget::Cap1, 4).unwrap();
        w.target = SpiTarget::Cap2;
        assert!(decode_word(&w).is_err());
        assert!(decode_bytes(&[0x00, 0x01]).is_err());
        assert!(decode_bytes(&[]).is_err());
    }

    #[test]
    fn hex_dump_round_trip() {
        let words = encode_config(&CancellerCode::PAPER_PROFILE).unwrap();
        let text = hex_dump(&words);
        assert_eq!(text, "ATT C0 1E\nPS 46 E0\nCAP1 30\nCAP2 46\nCAP3 86\n");
        assert_eq!(parse_hex_dump(&text).unwrap(), words);
    }
}
