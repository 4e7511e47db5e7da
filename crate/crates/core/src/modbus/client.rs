//! Blocking Modbus TCP client plus an in-process transport with the same API.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use super::codec::{
    decode_response, encode_request, frame_length, CodecError, ExceptionCode, Request, Response, MAX_PDU_LEN,
};
use super::server::{respond, SharedDevice};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no response within the timeout")]
    Timeout,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("device exception {code:?} for function {function:#04x}")]
    Exception { function: u8, code: ExceptionCode },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("transaction id mismatch: sent {expected}, got {got}")]
    TransactionMismatch { expected: u16, got: u16 },
    #[error("response does not match the request")]
    UnexpectedResponse,
}

/// Register access used by the force supervisor.
pub trait RegisterTransport: Send {
    fn transact(&mut self, req: &Request) -> Result<Response, ClientError>;

    fn read_holding(&mut self, address: u16, quantity: u16) -> Result<Vec<u16>, ClientError> {
        match self.transact(&Request::ReadHoldingRegisters { address, quantity })? {
            Response::ReadHoldingRegisters(v) if v.len() == quantity as usize => Ok(v),
            _ => Err(ClientError::UnexpectedResponse),
        }
    }

    fn read_input(&mut self, address: u16, quantity: u16) -> Result<Vec<u16>, ClientError> {
        match self.transact(&Request::ReadInputRegisters { address, quantity })? {
            Response::ReadInputRegisters(v) if v.len() == quantity as usize => Ok(v),
            _ => Err(ClientError::UnexpectedResponse),
        }
    }

    fn write_single(&mut self, address: u16, value: u16) -> Result<(), ClientError> {
        match self.transact(&Request::WriteSingleRegister { address, value })? {
            Response::WriteSingleRegister { address: a, value: v } if a == address && v == value => Ok(()),
            _ => Err(ClientError::UnexpectedResponse),
        }
    }

    fn write_multiple(&mut self, address: u16, values: &[u16]) -> Result<(), ClientError> {
        let req = Request::WriteMultipleRegisters {
            address,
            values: values.to_vec(),
        };
        match self.transact(&req)? {
            Response::WriteMultipleRegisters { address: a, quantity } if a == address && quantity as usize == values.len() => {
                Ok(())
            }
            _ => Err(ClientError::UnexpectedResponse),
        }
    }
}

fn check_exception(resp: Response) -> Result<Response, ClientError> {
    match resp {
        Response::Exception { function, code } => Err(ClientError::Exception { function, code }),
        other => Ok(other),
    }
}

pub struct ModbusClient {
    addr: SocketAddr,
    timeout: Duration,
    unit_id: u8,
    stream: Option<TcpStream>,
    next_tid: u16,
}

impl ModbusClient {
    pub fn connect(addr: SocketAddr, timeout: Duration, unit_id: u8) -> Result<Self, ClientError> {
        let mut c = Self {
            addr,
            timeout,
            unit_id,
            stream: None,
            next_tid: 1,
        };
        c.ensure_connected()?;
        Ok(c)
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn ensure_connected(&mut self) -> Result<&mut TcpStream, ClientError> {
        if self.stream.is_none() {
            let s = TcpStream::connect_timeout(&self.addr, self.timeout).map_err(classify)?;
            s.set_nodelay(true)?;
            s.set_read_timeout(Some(self.timeout))?;
            s.set_write_timeout(Some(self.timeout))?;
            self.stream = Some(s);
        }
        Ok(self.stream.as_mut().expect("just connected"))
    }

    fn exchange(&mut self, tid: u16, bytes: &[u8]) -> Result<Response, ClientError> {
        let stream = self.ensure_connected()?;
        stream.write_all(bytes).map_err(classify)?;
        let mut buf = vec![0u8; 6];
        stream.read_exact(&mut buf).map_err(classify)?;
        let len = frame_length(&buf).expect("six header bytes read");
        if !(8..=MAX_PDU_LEN + 7).contains(&len) {
            return Err(CodecError::MalformedFrame("bad length field").into());
        }
        buf.resize(len, 0);
        stream.read_exact(&mut buf[6..]).map_err(classify)?;
        let frame = decode_response(&buf)?;
        if frame.transaction_id != tid {
            return Err(ClientError::TransactionMismatch {
                expected: tid,
                got: frame.transaction_id,
            });
        }
        check_exception(frame.body)
    }
}

fn classify(e: io::Error) -> ClientError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => ClientError::Timeout,
        _ => ClientError::Io(e),
    }
}

impl RegisterTransport for ModbusClient {
    fn transact(&mut self, req: &Request) -> Result<Response, ClientError> {
        let tid = self.next_tid;
        self.next_tid = self.next_tid.wrapping_add(1);
        let bytes = encode_request(tid, self.unit_id, req)?;
        let result = self.exchange(tid, &bytes);
        if matches!(
            result,
            Err(ClientError::Timeout | ClientError::Io(_) | ClientError::Codec(_) | ClientError::TransactionMismatch { .. })
        ) {
            // The stream may hold a partial or stale reply; start over next time.
            self.stream = None;
        }
        result
    }
}

/// Runs frames through the codec against an in-process device, without sockets.
pub struct LoopbackTransport {
    device: SharedDevice,
    unit_id: u8,
    next_tid: u16,
    fail: Mutex<bool>,
}

impl LoopbackTransport {
    pub fn new(device: SharedDevice, unit_id: u8) -> Self {
        Self {
            device,
            unit_id,
            next_tid: 1,
            fail: Mutex::new(false),
        }
    }

    /// Makes every subsequent transaction time out, as a dead link would.
    pub fn set_link_down(&self, down: bool) {
        *self.fail.lock().unwrap_or_else(|e| e.into_inner()) = down;
    }
}

impl RegisterTransport for LoopbackTransport {
    fn transact(&mut self, req: &Request) -> Result<Response, ClientError> {
        if *self.fail.lock().unwrap_or_else(|e| e.into_inner()) {
            return Err(ClientError::Timeout);
        }
        let tid = self.next_tid;
        self.next_tid = self.next_tid.wrapping_add(1);
        let bytes = encode_request(tid, self.unit_id, req)?;
        let reply = respond(&self.device, &bytes).ok_or(ClientError::UnexpectedResponse)?;
        let frame = decode_response(&reply)?;
        if frame.transaction_id != tid {
            return Err(ClientError::TransactionMismatch {
                expected: tid,
                got: frame.transaction_id,
            });
        }
        check_exception(frame.body)
    }
}
