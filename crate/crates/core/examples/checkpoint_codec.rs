//! Encodes a checkpoint into two OP_RETURN payloads and decodes it back.

use babylon_sim::checkpoint::{body_len, decode_op_return, encode_op_return, Checkpoint};
use babylon_sim::crypto::{Bitmap, Digest};

fn main() {
    let n = 100;
    let mut bits = Bitmap::new(n);
    for i in (0..n).filter(|i| i % 3 != 0) {
        bits.set(i);
    }
    let cp = Checkpoint::new(7, Digest::of(b"block"), bits);
    let (p1, p2) = encode_op_return(&cp).unwrap();
    println!("body {} bytes, payloads {} + {}", body_len(n), p1.len(), p2.len());
    println!("p1 {}", hex::encode(&p1));
    println!("p2 {}", hex::encode(&p2));
    let back = decode_op_return(&p1, &p2, n).unwrap();
    assert_eq!(back, cp);
    println!("round trip ok, {} signers", back.bitmap.count_ones());
    let mut bad = p2.clone();
    bad[0] ^= 1;
    println!("corrupted second half: {:?}", decode_op_return(&p1, &bad, n).err());
}
