//! Canceller box programming words: encoding the published configuration,
//! the hex dump used for bring-up comparison, decoding, and bus timing.
//!
//! ```text
//! cargo run --release --example spi_config [ATT PS CAP1 CAP2 CAP3]
//! ```

use fd_lab::canceller::CancellerCode;
use fd_lab::spi::{
    decode_word, encode_config, hex_dump, parse_hex_dump, transfer_time_us, word_bits, DEFAULT_SPI_CLOCK_HZ,
};
use fd_lab::Error;

fn main() -> fd_lab::Result<()> {
    let args: Vec<u8> = std::env::args()
        .skip(1)
        .map(|a| a.parse::<u8>().map_err(|e| Error::Parse(format!("{a}: {e}"))))
        .collect::<Result<_, _>>()?;
    let code = match args.as_slice() {
        [] => CancellerCode::PAPER_PROFILE,
        [att, ps, c1, c2, c3] => CancellerCode { att: *att, ps: *ps, caps: [*c1, *c2, *c3] },
        _ => return Err(Error::Parse("expected ATT PS CAP1 CAP2 CAP3".into())),
    };

    let words = encode_config(&code)?;
    let dump = hex_dump(&words);
    print!("{dump}");
    for w in &words {
        let (target, value) = decode_word(w)?;
        println!("Finished programming {target} with value {value}");
    }
    assert_eq!(parse_hex_dump(&dump)?, words);

    println!();
    println!("{} bits on the bus", word_bits(&words));
    for clock in [1e6, 4e6, DEFAULT_SPI_CLOCK_HZ] {
        println!("{:>4.0} MHz clock: {:.3} us", clock / 1e6, transfer_time_us(&words, clock)?);
    }
    Ok(())
}
