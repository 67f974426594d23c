//! Protocol messages and their wire encoding.
//!
//! A frame is `tag: u8 | round: u32 | sender: u32 | payload`, integers
//! big-endian. Field elements take 32 bytes, reals 8 (IEEE-754 bits), and
//! vectors and byte strings carry a `u32` length prefix.

use std::fmt;

use crate::field::PrimeField;

use super::ProtocolError;

/// Wire id of the server; clients use their index.
pub const SERVER_ID: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    Server,
    Client(u32),
}

impl Party {
    pub fn to_wire(self) -> u32 {
        match self {
            Party::Server => SERVER_ID,
            Party::Client(i) => i,
        }
    }

    pub fn from_wire(id: u32) -> Self {
        if id == SERVER_ID {
            Party::Server
        } else {
            Party::Client(id)
        }
    }

    pub fn is_server(self) -> bool {
        self == Party::Server
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Server => write!(f, "server"),
            Party::Client(i) => write!(f, "client {i}"),
        }
    }
}

/// Round parameters published by the server before clients prove.
#[derive(Clone, Debug, PartialEq)]
pub struct ProofParams {
    pub reference: Vec<f64>,
    pub anchor: Option<Vec<f64>>,
    pub tau_c: f64,
    pub tau_e: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload<F: PrimeField> {
    PaillierPublicKey(Vec<u8>),
    /// Client to client only.
    PaillierSecretKey(Vec<u8>),
    SeedShare(Vec<u8>),
    SeedSum(Vec<u8>),
    HashCommit(F),
    InitialModel(Vec<f64>),
    ProofParams(ProofParams),
    Submission { w_bar: Vec<F>, proof: Vec<u8> },
    /// `count == 0` means no submission was accepted and the global model is
    /// unchanged.
    GlobalModel { sum: Vec<F>, count: u32 },
}

impl<F: PrimeField> Payload<F> {
    pub fn tag(&self) -> u8 {
        match self {
            Payload::PaillierPublicKey(_) => 1,
            Payload::PaillierSecretKey(_) => 2,
            Payload::SeedShare(_) => 3,
            Payload::SeedSum(_) => 4,
            Payload::HashCommit(_) => 5,
            Payload::InitialModel(_) => 6,
            Payload::ProofParams(_) => 7,
            Payload::Submission { .. } => 8,
            Payload::GlobalModel { .. } => 9,
        }
    }

    pub fn name(&self) -> &'static str {
        tag_name(self.tag())
    }
}

pub fn tag_name(tag: u8) -> &'static str {
    match tag {
        1 => "paillier-public-key",
        2 => "paillier-secret-key",
        3 => "seed-share",
        4 => "seed-sum",
        5 => "hash-commit",
        6 => "initial-model",
        7 => "proof-params",
        8 => "submission",
        9 => "global-model",
        _ => "unknown",
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message<F: PrimeField> {
    pub round: u32,
    pub sender: Party,
    pub payload: Payload<F>,
}

impl<F: PrimeField> Message<F> {
    pub fn new(round: u32, sender: Party, payload: Payload<F>) -> Self {
        Message {
            round,
            sender,
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.payload.tag()];
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&self.sender.to_wire().to_be_bytes());
        let mut w = Writer(&mut out);
        match &self.payload {
            Payload::PaillierPublicKey(b)
            | Payload::PaillierSecretKey(b)
            | Payload::SeedShare(b)
            | Payload::SeedSum(b) => w.bytes(b),
            Payload::HashCommit(h) => w.field(h),
            Payload::InitialModel(v) => w.reals(v),
            Payload::ProofParams(p) => {
                w.reals(&p.reference);
                match &p.anchor {
                    None => w.0.push(0),
                    Some(a) => {
                        w.0.push(1);
                        w.reals(a);
                    }
                }
                w.real(p.tau_c);
                w.real(p.tau_e);
            }
            Payload::Submission { w_bar, proof } => {
                w.fields(w_bar);
                w.bytes(proof);
            }
            Payload::GlobalModel { sum, count } => {
                w.fields(sum);
                w.0.extend_from_slice(&count.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(frame: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader(frame);
        let tag = r.u8()?;
        let round = r.u32()?;
        let sender = Party::from_wire(r.u32()?);
        let payload = match tag {
            1 => Payload::PaillierPublicKey(r.bytes()?),
            2 => Payload::PaillierSecretKey(r.bytes()?),
            3 => Payload::SeedShare(r.bytes()?),
            4 => Payload::SeedSum(r.bytes()?),
            5 => Payload::HashCommit(r.field()?),
            6 => Payload::InitialModel(r.reals()?),
            7 => {
                let reference = r.reals()?;
                let anchor = match r.u8()? {
                    0 => None,
                    1 => Some(r.reals()?),
                    _ => return Err(ProtocolError::Decode("anchor flag".into())),
                };
                Payload::ProofParams(ProofParams {
                    reference,
                    anchor,
                    tau_c: r.real()?,
                    tau_e: r.real()?,
                })
            }
            8 => Payload::Submission {
                w_bar: r.fields()?,
                proof: r.bytes()?,
            },
            9 => Payload::GlobalModel {
                sum: r.fields()?,
                count: r.u32()?,
            },
            t => return Err(ProtocolError::Decode(format!("unknown tag {t}"))),
        };
        if !r.0.is_empty() {
            return Err(ProtocolError::Decode("trailing bytes".into()));
        }
        Ok(Message {
            round,
            sender,
            payload,
        })
    }
}

struct Writer<'a>(&'a mut Vec<u8>);

impl Writer<'_> {
    fn len(&mut self, n: usize) {
        self.0.extend_from_slice(&(n as u32).to_be_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.len(b.len());
        self.0.extend_from_slice(b);
    }

    fn field<F: PrimeField>(&mut self, x: &F) {
        self.0.extend_from_slice(&x.to_bytes_be());
    }

    fn fields<F: PrimeField>(&mut self, xs: &[F]) {
        self.len(xs.len());
        xs.iter().for_each(|x| self.field(x));
    }

    fn real(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_bits().to_be_bytes());
    }

    fn reals(&mut self, xs: &[f64]) {
        self.len(xs.len());
        xs.iter().for_each(|x| self.real(*x));
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ProtocolError> {
        if self.0.len() < n {
            return Err(ProtocolError::Decode("truncated frame".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    /// Length prefix, checked against the bytes left so a corrupt length
    /// cannot trigger a huge allocation.
    fn len(&mut self, unit: usize) -> Result<usize, ProtocolError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(unit) > self.0.len() {
            return Err(ProtocolError::Decode("length prefix exceeds frame".into()));
        }
        Ok(n)
    }

    fn bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        let n = self.len(1)?;
        Ok(self.take(n)?.to_vec())
    }

    fn field<F: PrimeField>(&mut self) -> Result<F, ProtocolError> {
        let b: [u8; 32] = self.take(32)?.try_into().expect("32 bytes");
        F::from_bytes_be(&b).ok_or_else(|| ProtocolError::Decode("non-canonical field element".into()))
    }

    fn fields<F: PrimeField>(&mut self) -> Result<Vec<F>, ProtocolError> {
        let n = self.len(32)?;
        (0..n).map(|_| self.field()).collect()
    }

    fn real(&mut self) -> Result<f64, ProtocolError> {
        Ok(f64::from_bits(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes"))))
    }

    fn reals(&mut self) -> Result<Vec<f64>, ProtocolError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.real()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Fr;
    use proptest::prelude::*;

    fn samples() -> Vec<Message<Fr>> {
        let f = |x: u64| Fr::from_u64(x);
        vec![
            Message::new(0, Party::Client(0), Payload::PaillierPublicKey(vec![1, 2, 3])),
            Message::new(0, Party::Client(0), Payload::PaillierSecretKey(vec![])),
            Message::new(0, Party::Client(4), Payload::SeedShare(vec![9; 70])),
            Message::new(0, Party::Server, Payload::SeedSum(vec![7])),
            Message::new(0, Party::Client(2), Payload::HashCommit(-f(5))),
            Message::new(1, Party::Server, Payload::InitialModel(vec![0.5, -1.25])),
            Message::new(
                3,
                Party::Server,
                Payload::ProofParams(ProofParams {
                    reference: vec![1.0, -0.0, 3.5],
                    anchor: Some(vec![0.0; 3]),
                    tau_c: 0.1,
                    tau_e: 4.0,
                }),
            ),
            Message::new(
                3,
                Party::Server,
                Payload::ProofParams(ProofParams {
                    reference: vec![],
                    anchor: None,
                    tau_c: 0.0,
                    tau_e: 1.0,
                }),
            ),
            Message::new(
                7,
                Party::Client(1),
                Payload::Submission {
                    w_bar: vec![f(1), -f(1)],
                    proof: vec![0; 108],
                },
            ),
            Message::new(
                7,
                Party::Server,
                Payload::GlobalModel {
                    sum: vec![f(3)],
                    count: 2,
                },
            ),
        ]
    }

    #[test]
    fn every_payload_roundtrips() {
        for m in samples() {
            let frame = m.encode();
            assert_eq!(frame[0], m.payload.tag());
            assert_eq!(Message::<Fr>::decode(&frame).unwrap(), m);
        }
    }

    #[test]
    fn header_layout() {
        let m = Message::<Fr>::new(0x01020304, Party::Server, Payload::SeedSum(vec![0xaa]));
        assert_eq!(
            m.encode(),
            vec![4, 1, 2, 3, 4, 0xff, 0xff, 0xff, 0xff, 0, 0, 0, 1, 0xaa]
        );
    }

    #[test]
    fn truncations_and_garbage_are_errors() {
        for m in samples() {
            let frame = m.encode();
            for cut in 0..frame.len() {
                assert!(Message::<Fr>::decode(&frame[..cut]).is_err(), "{} cut {cut}", m.payload.name());
            }
            let mut long = frame.clone();
            long.push(0);
            assert!(Message::<Fr>::decode(&long).is_err());
        }
        assert!(Message::<Fr>::decode(&[42, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
        // 2^32-1 elements announced in a short frame
        let bad = [6, 0, 0, 0, 0, 0, 0, 0, 0, 0xff, 0xff, 0xff, 0xff];
        assert!(Message::<Fr>::decode(&bad).is_err());
    }

    #[test]
    fn non_canonical_field_element_rejected() {
        let mut frame = Message::<Fr>::new(0, Party::Client(0), Payload::HashCommit(Fr::ZERO)).encode();
        frame[9..].fill(0xff);
        assert!(Message::<Fr>::decode(&frame).is_err());
    }

    proptest! {
        #[test]
        fn random_submissions_roundtrip(
            round in any::<u32>(),
            sender in any::<u32>(),
            vals in proptest::collection::vec(any::<u64>(), 0..20),
            proof in proptest::collection::vec(any::<u8>(), 0..200),
        ) {
            let m = Message::new(
                round,
                Party::from_wire(sender),
                Payload::Submission { w_bar: vals.iter().map(|v| Fr::from_u64(*v)).collect(), proof },
            );
            prop_assert_eq!(Message::<Fr>::decode(&m.encode()).unwrap(), m);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
            let _ = Message::<Fr>::decode(&bytes);
        }
    }
}
