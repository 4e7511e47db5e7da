//! Modbus TCP server exposing a shared [`AcfDevice`].

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::codec::{
    decode_request, encode_response, frame_length, parse_header, ExceptionCode, Request, Response,
    MAX_PDU_LEN,
};
use super::registers::AcfDevice;

pub type SharedDevice = Arc<Mutex<AcfDevice>>;

/// Serves one request against the device.
pub fn handle_request(device: &mut AcfDevice, req: &Request) -> Response {
    let function = req.function() as u8;
    let result = match req {
        Request::ReadHoldingRegisters { address, quantity } => device
            .read_holding(*address, *quantity)
            .map(Response::ReadHoldingRegisters),
        Request::ReadInputRegisters { address, quantity } => device
            .read_input(*address, *quantity)
            .map(Response::ReadInputRegisters),
        Request::WriteSingleRegister { address, value } => device
            .write_single(*address, *value)
            .map(|_| Response::WriteSingleRegister {
                address: *address,
                value: *value,
            }),
        Request::WriteMultipleRegisters { address, values } => device
            .write_multiple(*address, values)
            .map(|_| Response::WriteMultipleRegisters {
                address: *address,
                quantity: values.len() as u16,
            }),
    };
    result.unwrap_or_else(|code| Response::Exception { function, code })
}

/// Reply bytes for one complete frame, or None if the connection should be dropped.
pub fn respond(device: &Mutex<AcfDevice>, frame: &[u8]) -> Option<Vec<u8>> {
    match decode_request(frame) {
        Ok(req) => {
            let resp = {
                let mut dev = device.lock().unwrap_or_else(|e| e.into_inner());
                handle_request(&mut dev, &req.body)
            };
            encode_response(req.transaction_id, req.unit_id, &resp).ok()
        }
        Err(err) => {
            let code: ExceptionCode = err.exception()?;
            let h = parse_header(frame).ok()?;
            let resp = Response::Exception {
                function: frame[7] & 0x7f,
                code,
            };
            encode_response(h.transaction_id, h.unit_id, &resp).ok()
        }
    }
}

type Connections = Arc<Mutex<HashMap<u64, TcpStream>>>;

pub struct ModbusServer {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    connections: Connections,
    accept: Option<JoinHandle<()>>,
}

impl ModbusServer {
    /// Binds and starts serving; port 0 picks a free port.
    pub fn bind(addr: impl ToSocketAddrs, device: SharedDevice) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let connections: Connections = Arc::default();
        let accept = {
            let stop = stop.clone();
            let connections = connections.clone();
            thread::Builder::new()
                .name("modbus-accept".into())
                .spawn(move || accept_loop(listener, device, stop, connections))?
        };
        log::info!("modbus server listening on {local_addr}");
        Ok(Self {
            local_addr,
            stop,
            connections,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Stops accepting and closes every live connection.
    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        let conns = std::mem::take(&mut *self.connections.lock().unwrap_or_else(|e| e.into_inner()));
        for (_, s) in conns {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for ModbusServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, device: SharedDevice, stop: Arc<AtomicBool>, connections: Connections) {
    let ids = AtomicU64::new(0);
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = ids.fetch_add(1, Ordering::Relaxed);
                if stream.set_nonblocking(false).is_err() || stream.set_nodelay(true).is_err() {
                    continue;
                }
                let Ok(clone) = stream.try_clone() else { continue };
                connections.lock().unwrap_or_else(|e| e.into_inner()).insert(id, clone);
                log::debug!("modbus connection {id} from {peer}");
                let device = device.clone();
                let connections = connections.clone();
                let spawned = thread::Builder::new()
                    .name(format!("modbus-conn-{id}"))
                    .spawn(move || {
                        serve_connection(stream, &device);
                        connections.lock().unwrap_or_else(|e| e.into_inner()).remove(&id);
                    });
                if let Err(e) = spawned {
                    log::warn!("could not spawn connection thread: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(10));
            }
        }
    }
}

fn serve_connection(mut stream: TcpStream, device: &Mutex<AcfDevice>) {
    let mut buf: Vec<u8> = Vec::with_capacity(512);
    let mut chunk = [0u8; 512];
    loop {
        // Answer every complete frame already buffered, in arrival order.
        while let Some(len) = frame_length(&buf) {
            if !(8..=MAX_PDU_LEN + 7).contains(&len) {
                log::debug!("dropping connection: bad length field");
                return;
            }
            if buf.len() < len {
                break;
            }
            let Some(reply) = respond(device, &buf[..len]) else {
                log::debug!("dropping connection: malformed frame");
                return;
            };
            if stream.write_all(&reply).is_err() {
                return;
            }
            buf.drain(..len);
        }
        match stream.read(&mut chunk) {
            Ok(0) | Err(_) => return,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
        }
    }
}
