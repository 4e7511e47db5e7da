//! Modbus TCP framing for the register functions the force device uses.
//!
//! Frame layout: MBAP header (transaction id, protocol id = 0, length, unit id)
//! followed by the PDU. `length` counts the unit id plus the PDU bytes. All
//! multi-byte fields are big-endian.

use thiserror::Error;

pub const MBAP_LEN: usize = 7;
pub const PROTOCOL_ID: u16 = 0;
pub const MAX_READ_QUANTITY: u16 = 125;
pub const MAX_WRITE_QUANTITY: u16 = 123;
/// Largest PDU the protocol allows.
pub const MAX_PDU_LEN: usize = 253;

#[repr(u8)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionCode {
    ReadHoldingRegisters = 0x03,
    ReadInputRegisters = 0x04,
    WriteSingleRegister = 0x06,
    WriteMultipleRegisters = 0x10,
}

impl FunctionCode {
    pub fn from_u8(value: u8) -> Option<Self> {
        match value {
            0x03 => Some(FunctionCode::ReadHoldingRegisters),
            0x04 => Some(FunctionCode::ReadInputRegisters),
            0x06 => Some(FunctionCode::WriteSingleRegister),
            0x10 => Some(FunctionCode::WriteMultipleRegisters),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExceptionCode(pub u8);

impl ExceptionCode {
    pub const ILLEGAL_FUNCTION: Self = Self(0x01);
    pub const ILLEGAL_DATA_ADDRESS: Self = Self(0x02);
    pub const ILLEGAL_DATA_VALUE: Self = Self(0x03);
    pub const SERVER_DEVICE_FAILURE: Self = Self(0x04);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    ReadHoldingRegisters { address: u16, quantity: u16 },
    ReadInputRegisters { address: u16, quantity: u16 },
    WriteSingleRegister { address: u16, value: u16 },
    WriteMultipleRegisters { address: u16, values: Vec<u16> },
}

impl Request {
    pub fn function(&self) -> FunctionCode {
        match self {
            Request::ReadHoldingRegisters { .. } => FunctionCode::ReadHoldingRegisters,
            Request::ReadInputRegisters { .. } => FunctionCode::ReadInputRegisters,
            Request::WriteSingleRegister { .. } => FunctionCode::WriteSingleRegister,
            Request::WriteMultipleRegisters { .. } => FunctionCode::WriteMultipleRegisters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    ReadHoldingRegisters(Vec<u16>),
    ReadInputRegisters(Vec<u16>),
    WriteSingleRegister { address: u16, value: u16 },
    WriteMultipleRegisters { address: u16, quantity: u16 },
    Exception { function: u8, code: ExceptionCode },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame<T> {
    pub transaction_id: u16,
    pub unit_id: u8,
    pub body: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MbapHeader {
    pub transaction_id: u16,
    pub protocol_id: u16,
    pub length: u16,
    pub unit_id: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("protocol id {0} is not Modbus (expected 0)")]
    ProtocolIdNonzero(u16),
    #[error("invalid quantity {0}")]
    InvalidQuantity(u16),
    #[error("unsupported function code {0:#04x}")]
    UnsupportedFunction(u8),
}

impl CodecError {
    /// Exception a server answers with, if the request is worth answering at all.
    pub fn exception(&self) -> Option<ExceptionCode> {
        match self {
            CodecError::UnsupportedFunction(_) => Some(ExceptionCode::ILLEGAL_FUNCTION),
            CodecError::InvalidQuantity(_) => Some(ExceptionCode::ILLEGAL_DATA_VALUE),
            _ => None,
        }
    }
}

/// Total byte length of the frame starting at `buf`, once the header's
/// length field is available.
pub fn frame_length(buf: &[u8]) -> Option<usize> {
    if buf.len() < 6 {
        return None;
    }
    Some(6 + u16::from_be_bytes([buf[4], buf[5]]) as usize)
}

pub fn parse_header(buf: &[u8]) -> Result<MbapHeader, CodecError> {
    if buf.len() < MBAP_LEN {
        return Err(CodecError::MalformedFrame("shorter than the MBAP header"));
    }
    let header = MbapHeader {
        transaction_id: u16::from_be_bytes([buf[0], buf[1]]),
        protocol_id: u16::from_be_bytes([buf[2], buf[3]]),
        length: u16::from_be_bytes([buf[4], buf[5]]),
        unit_id: buf[6],
    };
    if header.protocol_id != PROTOCOL_ID {
        return Err(CodecError::ProtocolIdNonzero(header.protocol_id));
    }
    if header.length as usize != buf.len() - 6 {
        return Err(CodecError::MalformedFrame("length field does not match frame size"));
    }
    if header.length < 2 {
        return Err(CodecError::MalformedFrame("missing function code"));
    }
    Ok(header)
}

fn frame(transaction_id: u16, unit_id: u8, pdu: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(MBAP_LEN + pdu.len());
    out.extend_from_slice(&transaction_id.to_be_bytes());
    out.extend_from_slice(&PROTOCOL_ID.to_be_bytes());
    out.extend_from_slice(&((pdu.len() + 1) as u16).to_be_bytes());
    out.push(unit_id);
    out.extend_from_slice(pdu);
    out
}

fn check_quantity(q: u16, max: u16) -> Result<(), CodecError> {
    if q == 0 || q > max {
        Err(CodecError::InvalidQuantity(q))
    } else {
        Ok(())
    }
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn words(bytes: &[u8]) -> Vec<u16> {
    bytes.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
}

pub fn encode_request(transaction_id: u16, unit_id: u8, req: &Request) -> Result<Vec<u8>, CodecError> {
    let mut pdu = vec![req.function() as u8];
    match req {
        Request::ReadHoldingRegisters { address, quantity }
        | Request::ReadInputRegisters { address, quantity } => {
            check_quantity(*quantity, MAX_READ_QUANTITY)?;
            pdu.extend_from_slice(&address.to_be_bytes());
            pdu.extend_from_slice(&quantity.to_be_bytes());
        }
        Request::WriteSingleRegister { address, value } => {
            pdu.extend_from_slice(&address.to_be_bytes());
            pdu.extend_from_slice(&value.to_be_bytes());
        }
        Request::WriteMultipleRegisters { address, values } => {
            let q = u16::try_from(values.len()).unwrap_or(u16::MAX);
            check_quantity(q, MAX_WRITE_QUANTITY)?;
            pdu.extend_from_slice(&address.to_be_bytes());
            pdu.extend_from_slice(&q.to_be_bytes());
            pdu.push((q * 2) as u8);
            for v in values {
                pdu.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    Ok(frame(transaction_id, unit_id, &pdu))
}

pub fn decode_request(buf: &[u8]) -> Result<Frame<Request>, CodecError> {
    let h = parse_header(buf)?;
    let pdu = &buf[MBAP_LEN..];
    let fc = pdu[0];
    let function = FunctionCode::from_u8(fc).ok_or(CodecError::UnsupportedFunction(fc))?;
    let data = &pdu[1..];
    let body = match function {
        FunctionCode::ReadHoldingRegisters | FunctionCode::ReadInputRegisters => {
            if data.len() != 4 {
                return Err(CodecError::MalformedFrame("read request must carry 4 data bytes"));
            }
            let address = be16(data, 0);
            let quantity = be16(data, 2);
            check_quantity(quantity, MAX_READ_QUANTITY)?;
            if function == FunctionCode::ReadHoldingRegisters {
                Request::ReadHoldingRegisters { address, quantity }
            } else {
                Request::ReadInputRegisters { address, quantity }
            }
        }
        FunctionCode::WriteSingleRegister => {
            if data.len() != 4 {
                return Err(CodecError::MalformedFrame("write-single request must carry 4 data bytes"));
            }
            Request::WriteSingleRegister {
                address: be16(data, 0),
                value: be16(data, 2),
            }
        }
        FunctionCode::WriteMultipleRegisters => {
            if data.len() < 5 {
                return Err(CodecError::MalformedFrame("write-multiple request too short"));
            }
            let address = be16(data, 0);
            let quantity = be16(data, 2);
            check_quantity(quantity, MAX_WRITE_QUANTITY)?;
            let byte_count = data[4] as usize;
            if byte_count != 2 * quantity as usize || data.len() != 5 + byte_count {
                return Err(CodecError::MalformedFrame("byte count does not match quantity"));
            }
            Request::WriteMultipleRegisters {
                address,
                values: words(&data[5..]),
            }
        }
    };
    Ok(Frame {
        transaction_id: h.transaction_id,
        unit_id: h.unit_id,
        body,
    })
}

pub fn encode_response(transaction_id: u16, unit_id: u8, resp: &Response) -> Result<Vec<u8>, CodecError> {
    let mut pdu = Vec::new();
    match resp {
        Response::ReadHoldingRegisters(values) | Response::ReadInputRegisters(values) => {
            let q = u16::try_from(values.len()).unwrap_or(u16::MAX);
            check_quantity(q, MAX_READ_QUANTITY)?;
            let fc = if matches!(resp, Response::ReadHoldingRegisters(_)) {
                FunctionCode::ReadHoldingRegisters
            } else {
                FunctionCode::ReadInputRegisters
            };
            pdu.push(fc as u8);
            pdu.push((q * 2) as u8);
            for v in values {
                pdu.extend_from_slice(&v.to_be_bytes());
            }
        }
        Response::WriteSingleRegister { address, value } => {
            pdu.push(FunctionCode::WriteSingleRegister as u8);
            pdu.extend_from_slice(&address.to_be_bytes());
            pdu.extend_from_slice(&value.to_be_bytes());
        }
        Response::WriteMultipleRegisters { address, quantity } => {
            check_quantity(*quantity, MAX_WRITE_QUANTITY)?;
            pdu.push(FunctionCode::WriteMultipleRegisters as u8);
            pdu.extend_from_slice(&address.to_be_bytes());
            pdu.extend_from_slice(&quantity.to_be_bytes());
        }
        Response::Exception { function, code } => {
            pdu.push(function | 0x80);
            pdu.push(code.0);
        }
    }
    Ok(frame(transaction_id, unit_id, &pdu))
}

pub fn decode_response(buf: &[u8]) -> Result<Frame<Response>, CodecError> {
    let h = parse_header(buf)?;
    let pdu = &buf[MBAP_LEN..];
    let fc = pdu[0];
    let data = &pdu[1..];
    let body = if fc & 0x80 != 0 {
        if data.len() != 1 {
            return Err(CodecError::MalformedFrame("exception response must carry one code byte"));
        }
        Response::Exception {
            function: fc & 0x7f,
            code: ExceptionCode(data[0]),
        }
    } else {
        let function = FunctionCode::from_u8(fc).ok_or(CodecError::UnsupportedFunction(fc))?;
        match function {
            FunctionCode::ReadHoldingRegisters | FunctionCode::ReadInputRegisters => {
                let Some((&count, rest)) = data.split_first() else {
                    return Err(CodecError::MalformedFrame("read response missing byte count"));
                };
                if count as usize != rest.len() || count % 2 != 0 || count == 0 {
                    return Err(CodecError::MalformedFrame("byte count does not match payload"));
                }
                check_quantity(count as u16 / 2, MAX_READ_QUANTITY)?;
                if function == FunctionCode::ReadHoldingRegisters {
                    Response::ReadHoldingRegisters(words(rest))
                } else {
                    Response::ReadInputRegisters(words(rest))
                }
            }
            FunctionCode::WriteSingleRegister => {
                if data.len() != 4 {
                    return Err(CodecError::MalformedFrame("write-single echo must carry 4 data bytes"));
                }
                Response::WriteSingleRegister {
                    address: be16(data, 0),
                    value: be16(data, 2),
                }
            }
            FunctionCode::WriteMultipleRegisters => {
                if data.len() != 4 {
                    return Err(CodecError::MalformedFrame("write-multiple echo must carry 4 data bytes"));
                }
                let quantity = be16(data, 2);
                check_quantity(quantity, MAX_WRITE_QUANTITY)?;
                Response::WriteMultipleRegisters {
                    address: be16(data, 0),
                    quantity,
                }
            }
        }
    };
    Ok(Frame {
        transaction_id: h.transaction_id,
        unit_id: h.unit_id,
        body,
    })
}
